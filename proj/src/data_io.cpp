#include "lrp2/data_io.hpp"

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>
#include <unicode/ustring.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "lrp2/errors.hpp"
#include "lrp2/util.hpp"

namespace lrp2 {

using nlohmann::json;

std::string nfc(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  int32_t length = 0;
  u_strFromUTF8(nullptr, 0, &length, text.data(), static_cast<int32_t>(text.size()), &status);
  if (status == U_INVALID_CHAR_FOUND || status == U_ILLEGAL_CHAR_FOUND) {
    throw ValidationError("invalid UTF-8");
  }
  status = U_ZERO_ERROR;
  const icu::Normalizer2* normalizer = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
  const auto source = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  const icu::UnicodeString normalized = normalizer->normalize(source, status);
  if (U_FAILURE(status)) throw ValidationError("NFC normalization failed");
  std::string out;
  normalized.toUTF8String(out);
  return out;
}

// ---- files

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp" + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw InputError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

// ---- meta

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) throw ValidationError("bad " + what + " '" + s + "'");
  return v;
}

void check_version(const json& v) {
  if (!v.is_number_integer() || v.get<long long>() != kFormatVersion) {
    throw VersionError("unsupported format version " + v.dump() + " (expected " +
                       std::to_string(kFormatVersion) + ")");
  }
}

void check_meta_value(const std::string& key, const std::string& value) {
  const auto space = [](unsigned char c) { return std::isspace(c) != 0; };
  if (key.empty() || key.find('=') != std::string::npos || std::any_of(key.begin(), key.end(), space) ||
      std::any_of(value.begin(), value.end(), space)) {
    throw ReportError("meta entry '" + key + "' must be a bare key with a whitespace-free value");
  }
}

}  // namespace

std::optional<std::string> OutputMeta::get(const std::string& key) const {
  if (key == "seed") return std::to_string(seed);
  if (key == "config_hash") return config_hash;
  if (key == "tool_version") return tool_version;
  const auto it = extra.find(key);
  if (it == extra.end()) return std::nullopt;
  return it->second;
}

std::string meta_line(const OutputMeta& meta) {
  std::string line = "# version=" + std::to_string(kFormatVersion) + " seed=" + std::to_string(meta.seed) +
                     " config_hash=" + meta.config_hash + " tool_version=" + meta.tool_version;
  check_meta_value("config_hash", meta.config_hash);
  check_meta_value("tool_version", meta.tool_version);
  for (const auto& [k, v] : meta.extra) {
    check_meta_value(k, v);
    line += " " + k + "=" + v;
  }
  return line;
}

OutputMeta parse_meta_line(std::string_view line) {
  if (line.substr(0, 2) != "# ") throw VersionError("missing meta line with version tag");
  std::istringstream in{std::string(line.substr(2))};
  std::map<std::string, std::string> kv;
  std::string token;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError("bad meta entry '" + token + "'");
    kv[token.substr(0, eq)] = token.substr(eq + 1);
  }
  const auto version = kv.find("version");
  if (version == kv.end()) throw VersionError("meta line has no version tag");
  if (version->second != std::to_string(kFormatVersion)) {
    throw VersionError("unsupported format version '" + version->second + "' (expected " +
                       std::to_string(kFormatVersion) + ")");
  }
  OutputMeta meta;
  for (const char* key : {"seed", "config_hash", "tool_version"}) {
    if (!kv.count(key)) throw ValidationError(std::string("meta line lacks ") + key);
  }
  meta.seed = parse_u64(kv.at("seed"), "seed");
  meta.config_hash = kv.at("config_hash");
  meta.tool_version = kv.at("tool_version");
  for (auto& [k, v] : kv) {
    if (k != "version" && k != "seed" && k != "config_hash" && k != "tool_version") meta.extra[k] = v;
  }
  return meta;
}

json meta_json(const OutputMeta& meta) {
  json j{{"version", kFormatVersion},
         {"seed", meta.seed},
         {"config_hash", meta.config_hash},
         {"tool_version", meta.tool_version}};
  for (const auto& [k, v] : meta.extra) j[k] = v;
  return j;
}

OutputMeta meta_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("meta must be an object");
  if (!j.contains("version")) throw VersionError("meta has no version tag");
  check_version(j.at("version"));
  OutputMeta meta;
  try {
    meta.seed = j.at("seed").get<std::uint64_t>();
    meta.config_hash = j.at("config_hash").get<std::string>();
    meta.tool_version = j.at("tool_version").get<std::string>();
    for (const auto& [k, v] : j.items()) {
      if (k != "version" && k != "seed" && k != "config_hash" && k != "tool_version") {
        meta.extra[k] = v.get<std::string>();
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad meta: ") + e.what());
  }
  return meta;
}

namespace {

// ---- JSONL

struct JsonlRecord {
  std::size_t line = 0;  // 1-based
  json value;
};

struct Jsonl {
  std::optional<OutputMeta> meta;
  std::vector<JsonlRecord> records;
};

// Parses every line; a leading {"meta": ...} record is split off. Blank or
// unparsable lines are collected into one ValidationError.
Jsonl read_jsonl(const std::filesystem::path& path) {
  const auto lines = split_lines(read_file(path));
  Jsonl out;
  std::vector<std::string> problems;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (is_blank(lines[n])) {
      problems.push_back("line " + std::to_string(n + 1) + ": blank line");
      continue;
    }
    json value;
    try {
      value = json::parse(lines[n]);
    } catch (const json::parse_error&) {
      problems.push_back("line " + std::to_string(n + 1) + ": not valid JSON");
      continue;
    }
    if (n == 0 && value.is_object() && value.size() == 1 && value.contains("meta")) {
      out.meta = meta_from_json(value.at("meta"));
      continue;
    }
    out.records.push_back({n + 1, std::move(value)});
  }
  if (!problems.empty()) {
    std::string msg = path.string() + ": " + std::to_string(problems.size()) + " malformed line(s)";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
  if (out.records.empty()) throw ValidationError(path.string() + ": no records");
  return out;
}

// Applies `parse` to each record, gathering failures with line numbers.
template <typename T, typename Fn>
std::vector<T> parse_records(const std::filesystem::path& path, const std::vector<JsonlRecord>& records, Fn parse) {
  std::vector<T> out;
  std::vector<std::string> problems;
  for (const auto& r : records) {
    try {
      if (!r.value.is_object()) throw ValidationError("record is not an object");
      out.push_back(parse(r.value));
    } catch (const json::exception& e) {
      problems.push_back("line " + std::to_string(r.line) + ": " + e.what());
    } catch (const ValidationError& e) {
      problems.push_back("line " + std::to_string(r.line) + ": " + e.what());
    } catch (const InputError& e) {
      problems.push_back("line " + std::to_string(r.line) + ": " + e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = path.string() + ": " + std::to_string(problems.size()) + " malformed line(s)";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ValidationError(msg);
  }
  return out;
}

std::string string_field(const json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("missing field \"") + key + "\"");
  const auto& v = j.at(key);
  if (!v.is_string()) throw ValidationError(std::string("field \"") + key + "\" must be a string");
  std::string s = nfc(v.get<std::string>());
  if (s.empty()) throw ValidationError(std::string("field \"") + key + "\" is empty");
  return s;
}

template <typename Int>
Int int_field(const json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("missing field \"") + key + "\"");
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ValidationError(std::string("field \"") + key + "\" must be an integer");
  return v.get<Int>();
}

double number_field(const json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("missing field \"") + key + "\"");
  const auto& v = j.at(key);
  if (!v.is_number()) throw ValidationError(std::string("field \"") + key + "\" must be a number");
  return v.get<double>();
}

std::optional<int> optional_layer(const json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("missing field \"") + key + "\"");
  if (j.at(key).is_null()) return std::nullopt;
  return int_field<int>(j, key);
}

json layer_json(std::optional<int> v) { return v ? json(*v) : json(nullptr); }

std::string jsonl_text(const OutputMeta& meta, const std::vector<json>& records) {
  std::string out = json{{"meta", meta_json(meta)}}.dump() + "\n";
  for (const auto& r : records) out += r.dump() + "\n";
  return out;
}

json read_json_file(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": not valid JSON (" + e.what() + ")");
  }
  if (!j.is_object()) throw ValidationError(path.string() + ": top level must be an object");
  if (!j.contains("version")) throw VersionError(path.string() + ": no version tag");
  check_version(j.at("version"));
  return j;
}

// ---- CSV

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") != std::string::npos) throw ReportError("CSV field '" + s + "' needs quoting");
  return s;
}

std::string csv_number(std::optional<double> v) { return v ? format_double(*v) : "n/a"; }

std::optional<double> parse_number(const std::string& s) {
  if (s == "n/a") return std::nullopt;
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) throw ReportError("bad number '" + s + "'");
  return v;
}

double required_number(const std::string& s) {
  const auto v = parse_number(s);
  if (!v) throw ReportError("missing value where a number is required");
  return *v;
}

int parse_int(const std::string& s) {
  int v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) throw ReportError("bad integer '" + s + "'");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

struct Csv {
  OutputMeta meta;
  std::vector<std::vector<std::string>> rows;
};

std::string csv_text(const OutputMeta& meta, const std::string& header,
                     const std::vector<std::vector<std::string>>& rows) {
  std::string out = meta_line(meta) + "\n" + header + "\n";
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < r.size(); ++k) out += (k ? "," : "") + csv_field(r[k]);
    out += "\n";
  }
  return out;
}

Csv read_csv(const std::filesystem::path& path, const std::string& header) {
  const auto lines = split_lines(read_file(path));
  if (lines.empty()) throw VersionError(path.string() + ": empty file, no version tag");
  Csv csv;
  csv.meta = parse_meta_line(lines[0]);
  if (lines.size() < 2 || lines[1] != header) {
    throw ReportError(path.string() + ": expected header '" + header + "'");
  }
  const std::size_t width = split_csv(header).size();
  for (std::size_t n = 2; n < lines.size(); ++n) {
    auto fields = split_csv(lines[n]);
    if (fields.size() != width) {
      throw ReportError(path.string() + ": line " + std::to_string(n + 1) + " has " +
                        std::to_string(fields.size()) + " fields, expected " + std::to_string(width));
    }
    csv.rows.push_back(std::move(fields));
  }
  return csv;
}

template <typename Fn>
auto with_path(const std::filesystem::path& path, Fn fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw ReportError(path.string() + ": " + e.what());
  }
}

}  // namespace

// ---- probe datasets

json DatasetManifest::to_json() const {
  return {{"name", name}, {"languages", languages}, {"relations", relations}, {"counts", counts},
          {"version", version}};
}

DatasetManifest DatasetManifest::from_json(const json& j) {
  if (!j.is_object() || !j.contains("version")) throw VersionError("manifest has no version tag");
  check_version(j.at("version"));
  DatasetManifest m;
  try {
    m.name = j.at("name").get<std::string>();
    m.languages = j.at("languages").get<std::vector<std::string>>();
    m.relations = j.at("relations").get<std::vector<std::string>>();
    m.counts = j.at("counts").get<std::map<std::string, std::map<std::string, int>>>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad manifest: ") + e.what());
  }
  if (m.relations.empty()) throw ValidationError("manifest lists no relations");
  const std::set<std::string> langs(m.languages.begin(), m.languages.end());
  const std::set<std::string> rels(m.relations.begin(), m.relations.end());
  for (const auto& [lang, per] : m.counts) {
    if (!langs.count(lang)) throw ValidationError("manifest counts name unknown language '" + lang + "'");
    for (const auto& [rel, n] : per) {
      if (!rels.count(rel)) throw ValidationError("manifest counts name unknown relation '" + rel + "'");
      if (n <= 0) throw ValidationError("manifest count for " + lang + "/" + rel + " must be positive");
    }
  }
  return m;
}

DatasetManifest compute_manifest(const std::string& name, const std::vector<ProbeQuery>& queries) {
  DatasetManifest m;
  m.name = name;
  std::set<std::string> langs;
  std::set<std::string> rels;
  for (const auto& q : queries) {
    langs.insert(q.lang);
    rels.insert(q.relation);
    ++m.counts[q.lang][q.relation];
  }
  m.languages.assign(langs.begin(), langs.end());
  m.relations.assign(rels.begin(), rels.end());
  return m;
}

ProbeDataset load_probe_dataset(const std::filesystem::path& path) {
  const auto jsonl = read_jsonl(path);
  ProbeDataset ds;
  ds.queries = parse_records<ProbeQuery>(path, jsonl.records, [](const json& j) {
    ProbeQuery q{string_field(j, "lang"),    string_field(j, "relation"), string_field(j, "template"),
                 string_field(j, "subject"), string_field(j, "object"),   string_field(j, "uuid")};
    validate_query(q);
    return q;
  });
  std::set<std::pair<std::string, std::string>> seen;
  std::vector<std::string> dups;
  for (std::size_t k = 0; k < ds.queries.size(); ++k) {
    if (!seen.insert({ds.queries[k].lang, ds.queries[k].uuid}).second) {
      dups.push_back("line " + std::to_string(jsonl.records[k].line) + ": duplicate uuid " + ds.queries[k].uuid +
                     " for " + ds.queries[k].lang);
    }
  }
  if (!dups.empty()) {
    std::string msg = path.string() + ": " + std::to_string(dups.size()) + " malformed line(s)";
    for (const auto& d : dups) msg += "\n  " + d;
    throw ValidationError(msg);
  }
  ds.manifest = compute_manifest(path.stem().string(), ds.queries);
  return ds;
}

void save_probe_dataset(const std::filesystem::path& path, const std::vector<ProbeQuery>& queries,
                        const OutputMeta& meta) {
  std::vector<json> records;
  for (const auto& q : queries) {
    records.push_back({{"lang", q.lang},
                       {"relation", q.relation},
                       {"template", q.template_text},
                       {"subject", q.subject},
                       {"object", q.object},
                       {"uuid", q.uuid}});
  }
  write_file_atomic(path, jsonl_text(meta, records));
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest,
                   const std::optional<OutputMeta>& meta) {
  auto j = manifest.to_json();
  if (meta) j["meta"] = meta_json(*meta);
  write_file_atomic(path, j.dump(2) + "\n");
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": not valid JSON (" + e.what() + ")");
  }
  return DatasetManifest::from_json(j);
}

// ---- corpora

std::vector<CorpusLine> load_corpus(const std::filesystem::path& path, const Vocabulary* vocab) {
  const auto jsonl = read_jsonl(path);
  return parse_records<CorpusLine>(path, jsonl.records, [&](const json& j) {
    CorpusLine line{string_field(j, "lang"), string_field(j, "text"), {}};
    if (!j.contains("token_ids") || !j.at("token_ids").is_array()) {
      throw ValidationError("field \"token_ids\" must be an array");
    }
    for (const auto& t : j.at("token_ids")) {
      if (!t.is_number_integer() || t.get<long long>() < 0) {
        throw ValidationError("token ids must be non-negative integers");
      }
      line.token_ids.push_back(t.get<TokenId>());
    }
    if (vocab && vocab->encode(line.text) != line.token_ids) {
      throw ValidationError("token_ids disagree with the vocabulary encoding of the text");
    }
    return line;
  });
}

void save_corpus(const std::filesystem::path& path, const std::vector<CorpusLine>& lines, const OutputMeta& meta) {
  std::vector<json> records;
  for (const auto& l : lines) records.push_back({{"lang", l.lang}, {"text", l.text}, {"token_ids", l.token_ids}});
  write_file_atomic(path, jsonl_text(meta, records));
}

std::vector<CorpusLine> corpus_lines(const std::vector<Sentence>& sentences) {
  std::vector<CorpusLine> out;
  for (const auto& s : sentences) out.push_back({s.lang, s.text, s.token_ids});
  return out;
}

ParallelCorpus load_parallel_corpus(const std::filesystem::path& path_a, const std::filesystem::path& path_b,
                                    const Vocabulary& vocab, int max_seq_len) {
  const auto a = split_lines(read_file(path_a));
  const auto b = split_lines(read_file(path_b));
  if (a.size() != b.size()) {
    throw AlignmentError(path_a.string() + " has " + std::to_string(a.size()) + " lines but " + path_b.string() +
                         " has " + std::to_string(b.size()));
  }
  const auto encode = [&](const std::string& text, const std::filesystem::path& path, std::size_t n) {
    try {
      std::vector<TokenId> ids{vocab.bos_id()};
      for (TokenId t : vocab.encode(nfc(text))) ids.push_back(t);
      return ids;
    } catch (const Error& e) {
      throw ValidationError(path.string() + ": line " + std::to_string(n + 1) + ": " + e.what());
    }
  };
  ParallelCorpus out;
  const auto fits = [&](const std::vector<TokenId>& ids) {
    return ids.size() >= 3 && ids.size() <= static_cast<std::size_t>(max_seq_len);
  };
  for (std::size_t n = 0; n < a.size(); ++n) {
    auto ia = encode(a[n], path_a, n);
    auto ib = encode(b[n], path_b, n);
    if (fits(ia) && fits(ib)) {
      out.pairs.emplace_back(std::move(ia), std::move(ib));
    } else {
      ++out.filtered;
    }
  }
  return out;
}

// ---- language meta

std::map<std::string, LanguageMeta> load_language_meta(const std::filesystem::path& path,
                                                       const ResourceThresholds& thresholds) {
  const auto jsonl = read_jsonl(path);
  const auto metas = parse_records<LanguageMeta>(path, jsonl.records, [&](const json& j) {
    LanguageMeta m{string_field(j, "lang"), parse_family(string_field(j, "family")),
                   parse_resource(string_field(j, "resource")), int_field<long long>(j, "wiki_articles")};
    m.validate(thresholds);
    return m;
  });
  std::map<std::string, LanguageMeta> out;
  for (const auto& m : metas) {
    if (!out.emplace(m.lang, m).second) throw ValidationError(path.string() + ": duplicate meta for " + m.lang);
  }
  return out;
}

void save_language_meta(const std::filesystem::path& path, const std::vector<LanguageMeta>& metas,
                        const OutputMeta& meta) {
  std::vector<json> records;
  for (const auto& m : metas) {
    records.push_back({{"lang", m.lang},
                       {"family", to_string(m.family)},
                       {"resource", to_string(m.resource)},
                       {"wiki_articles", m.wiki_articles}});
  }
  write_file_atomic(path, jsonl_text(meta, records));
}

// ---- probe results and metrics

void save_results(const std::filesystem::path& path, const std::vector<ProbeResult>& results,
                  const OutputMeta& meta) {
  std::vector<json> records;
  for (const auto& r : results) {
    records.push_back({{"uuid", r.uuid},
                       {"gold_rank", r.gold_rank},
                       {"correct", r.correct},
                       {"lirp", layer_json(r.lirp)},
                       {"lsrp", layer_json(r.lsrp)}});
  }
  write_file_atomic(path, jsonl_text(meta, records));
}

std::vector<ProbeResult> load_results(const std::filesystem::path& path) {
  const auto jsonl = read_jsonl(path);
  if (!jsonl.meta) throw VersionError(path.string() + ": no meta record with a version tag");
  return parse_records<ProbeResult>(path, jsonl.records, [](const json& j) {
    ProbeResult r;
    r.uuid = string_field(j, "uuid");
    r.gold_rank = int_field<int>(j, "gold_rank");
    if (!j.contains("correct") || !j.at("correct").is_boolean()) {
      throw ValidationError("field \"correct\" must be a boolean");
    }
    r.correct = j.at("correct").get<bool>();
    r.lirp = optional_layer(j, "lirp");
    r.lsrp = optional_layer(j, "lsrp");
    return r;
  });
}

void save_probe_metrics(const std::filesystem::path& path, const ProbeMetrics& m, const OutputMeta& meta) {
  const json j{{"lang", m.lang},
               {"pivot", m.pivot},
               {"lirp", layer_json(m.lirp)},
               {"lsrp", layer_json(m.lsrp)},
               {"accuracy", m.accuracy},
               {"transferability", m.transferability},
               {"relation_transferability", m.relation_transferability},
               {"version", kFormatVersion},
               {"meta", meta_json(meta)}};
  write_file_atomic(path, j.dump(2) + "\n");
}

ProbeMetrics load_probe_metrics(const std::filesystem::path& path) {
  const auto j = read_json_file(path);
  return with_path(path, [&] {
    ProbeMetrics m;
    m.lang = j.at("lang").get<std::string>();
    m.pivot = j.at("pivot").get<std::string>();
    m.lirp = optional_layer(j, "lirp");
    m.lsrp = optional_layer(j, "lsrp");
    m.accuracy = number_field(j, "accuracy");
    m.transferability = number_field(j, "transferability");
    m.relation_transferability = j.at("relation_transferability").get<std::map<std::string, double>>();
    return m;
  });
}

// ---- sweep

void save_sweep(const std::filesystem::path& path, const SweepResult& result, const OutputMeta& meta) {
  std::vector<json> records;
  const auto add = [&](const SweepEntry& e) {
    records.push_back({{"lang", result.lang},
                       {"i", e.is_baseline() ? json(nullptr) : json(e.i)},
                       {"j", e.is_baseline() ? json(nullptr) : json(e.j)},
                       {"accuracy", e.accuracy},
                       {"transferability", e.transferability},
                       {"relation_transferability", e.relation_transferability}});
  };
  add(result.baseline);
  for (const auto& e : result.entries) add(e);
  write_file_atomic(path, jsonl_text(meta, records));
}

SweepResult load_sweep(const std::filesystem::path& path) {
  const auto jsonl = read_jsonl(path);
  if (!jsonl.meta) throw VersionError(path.string() + ": no meta record with a version tag");
  std::vector<std::string> langs;
  const auto entries = parse_records<SweepEntry>(path, jsonl.records, [&](const json& j) {
    langs.push_back(string_field(j, "lang"));
    SweepEntry e;
    const auto i = optional_layer(j, "i");
    const auto jj = optional_layer(j, "j");
    if (i.has_value() != jj.has_value()) throw ValidationError("i and j must both be null or both be set");
    e.i = i.value_or(0);
    e.j = jj.value_or(0);
    e.accuracy = number_field(j, "accuracy");
    e.transferability = number_field(j, "transferability");
    if (j.contains("relation_transferability")) {
      e.relation_transferability = j.at("relation_transferability").get<std::map<std::string, double>>();
    }
    return e;
  });
  SweepResult r;
  r.lang = langs.front();
  bool have_baseline = false;
  for (std::size_t k = 0; k < entries.size(); ++k) {
    if (langs[k] != r.lang) throw ValidationError(path.string() + ": sweep file mixes languages");
    if (entries[k].is_baseline()) {
      if (have_baseline) throw ValidationError(path.string() + ": more than one baseline record");
      r.baseline = entries[k];
      have_baseline = true;
    } else {
      r.entries.push_back(entries[k]);
    }
  }
  if (!have_baseline) throw ValidationError(path.string() + ": no baseline record");
  std::sort(r.entries.begin(), r.entries.end(),
            [](const SweepEntry& a, const SweepEntry& b) { return std::pair{a.i, a.j} < std::pair{b.i, b.j}; });
  return r;
}

namespace {
constexpr const char* kBestHeader = "lang,criterion,lirp_layer,lsrp_layer,value";
constexpr const char* kGroupedHeader = "model,config,group,accuracy,transferability";
constexpr const char* kRelationHeader = "relation,transferable_percent,languages";
constexpr const char* kCurveHeader = "layer,value,config";
constexpr const char* kOverlapHeader = "scope,config,same,different,avg";
constexpr const char* kGapHeader = "gap,criterion,value";
}  // namespace

void save_gap_curves(const std::filesystem::path& path, const SweepResult& result, const OutputMeta& meta) {
  OutputMeta m = meta;
  m.extra["lang"] = result.lang;
  std::vector<std::vector<std::string>> out;
  for (Criterion c : {Criterion::accuracy, Criterion::transferability}) {
    for (const auto& [gap, value] : gap_curve(result, c)) {
      out.push_back({std::to_string(gap), to_string(c), format_double(value)});
    }
  }
  write_file_atomic(path, csv_text(m, kGapHeader, out));
}

std::map<Criterion, std::map<int, double>> load_gap_curves(const std::filesystem::path& path) {
  const auto csv = read_csv(path, kGapHeader);
  std::map<Criterion, std::map<int, double>> curves;
  for (const auto& f : csv.rows) {
    Criterion c = Criterion::accuracy;
    try {
      c = parse_criterion(f[1]);
    } catch (const ConfigError& e) {
      throw ReportError(path.string() + ": " + e.what());
    }
    if (!curves[c].emplace(parse_int(f[0]), required_number(f[2])).second) {
      throw ReportError(path.string() + ": gap " + f[0] + " listed twice for " + f[1]);
    }
  }
  return curves;
}

void save_best_configs(const std::filesystem::path& path, const std::vector<BestConfigRow>& rows,
                       const OutputMeta& meta) {
  std::vector<std::vector<std::string>> out;
  for (const auto& r : rows) {
    const bool base = r.best.baseline;
    out.push_back({r.lang, to_string(r.criterion), base ? "" : std::to_string(r.best.i),
                   base ? "" : std::to_string(r.best.j), format_double(r.best.value)});
  }
  write_file_atomic(path, csv_text(meta, kBestHeader, out));
}

std::vector<BestConfigRow> load_best_configs(const std::filesystem::path& path) {
  const auto csv = read_csv(path, kBestHeader);
  std::vector<BestConfigRow> rows;
  for (const auto& f : csv.rows) {
    BestConfigRow r;
    r.lang = f[0];
    try {
      r.criterion = parse_criterion(f[1]);
    } catch (const ConfigError& e) {
      throw ReportError(path.string() + ": " + e.what());
    }
    if (f[2].empty() != f[3].empty()) throw ReportError(path.string() + ": half-empty layer pair");
    r.best.baseline = f[2].empty();
    r.best.i = r.best.baseline ? 0 : parse_int(f[2]);
    r.best.j = r.best.baseline ? 0 : parse_int(f[3]);
    r.best.value = required_number(f[4]);
    rows.push_back(r);
  }
  return rows;
}

// ---- grouped report

void save_grouped_report(const std::filesystem::path& path, const std::vector<GroupedReport>& reports,
                         const OutputMeta& meta) {
  std::vector<std::vector<std::string>> out;
  for (const auto& rep : reports) {
    for (const auto& row : rep.rows) {
      out.push_back({rep.model, rep.config, row.group, csv_number(row.accuracy), csv_number(row.transferability)});
    }
  }
  write_file_atomic(path, csv_text(meta, kGroupedHeader, out));
}

std::vector<GroupedReport> load_grouped_report(const std::filesystem::path& path) {
  const auto csv = read_csv(path, kGroupedHeader);
  std::vector<GroupedReport> reports;
  for (const auto& f : csv.rows) {
    if (reports.empty() || reports.back().model != f[0] || reports.back().config != f[1]) {
      reports.push_back({f[0], f[1], {}});
    }
    reports.back().rows.push_back({f[2], parse_number(f[3]), parse_number(f[4])});
  }
  return reports;
}

void save_grouped_report_json(const std::filesystem::path& path, const std::vector<GroupedReport>& reports,
                              const OutputMeta& meta) {
  json arr = json::array();
  for (const auto& rep : reports) {
    json rows = json::array();
    for (const auto& row : rep.rows) {
      rows.push_back({{"group", row.group},
                      {"accuracy", row.accuracy ? json(*row.accuracy) : json(nullptr)},
                      {"transferability", row.transferability ? json(*row.transferability) : json(nullptr)}});
    }
    arr.push_back({{"model", rep.model}, {"config", rep.config}, {"rows", rows}});
  }
  write_file_atomic(path, json{{"reports", arr}, {"version", kFormatVersion}, {"meta", meta_json(meta)}}.dump(2) +
                              "\n");
}

std::vector<GroupedReport> load_grouped_report_json(const std::filesystem::path& path) {
  const auto j = read_json_file(path);
  return with_path(path, [&] {
    std::vector<GroupedReport> reports;
    for (const auto& rep : j.at("reports")) {
      GroupedReport r{rep.at("model").get<std::string>(), rep.at("config").get<std::string>(), {}};
      for (const auto& row : rep.at("rows")) {
        const auto opt = [&](const char* key) -> std::optional<double> {
          if (row.at(key).is_null()) return std::nullopt;
          return row.at(key).get<double>();
        };
        r.rows.push_back({row.at("group").get<std::string>(), opt("accuracy"), opt("transferability")});
      }
      reports.push_back(std::move(r));
    }
    return reports;
  });
}

void save_relation_report(const std::filesystem::path& path, const std::vector<RelationTransferRow>& rows,
                          const OutputMeta& meta) {
  std::vector<std::vector<std::string>> out;
  for (const auto& r : rows) {
    out.push_back({r.relation, format_double(r.transferable_percent), std::to_string(r.languages)});
  }
  write_file_atomic(path, csv_text(meta, kRelationHeader, out));
}

std::vector<RelationTransferRow> load_relation_report(const std::filesystem::path& path) {
  const auto csv = read_csv(path, kRelationHeader);
  std::vector<RelationTransferRow> rows;
  for (const auto& f : csv.rows) rows.push_back({f[0], required_number(f[1]), parse_int(f[2])});
  return rows;
}

// ---- curves

void save_curves(const std::filesystem::path& path, const std::vector<SpaceDistanceCurve>& curves,
                 const OutputMeta& meta) {
  if (curves.empty()) throw ReportError("no curves to save");
  OutputMeta m = meta;
  m.extra["lang_a"] = curves.front().lang_a;
  m.extra["lang_b"] = curves.front().lang_b;
  std::vector<std::vector<std::string>> out;
  for (const auto& c : curves) {
    if (c.lang_a != curves.front().lang_a || c.lang_b != curves.front().lang_b) {
      throw ReportError("curves in one file must share the language pair");
    }
    for (std::size_t k = 0; k < c.values.size(); ++k) {
      out.push_back({std::to_string(k), format_double(c.values[k]), c.config});
    }
  }
  write_file_atomic(path, csv_text(m, kCurveHeader, out));
}

std::vector<SpaceDistanceCurve> load_curves(const std::filesystem::path& path) {
  const auto csv = read_csv(path, kCurveHeader);
  const auto lang_a = csv.meta.get("lang_a");
  const auto lang_b = csv.meta.get("lang_b");
  if (!lang_a || !lang_b) throw ReportError(path.string() + ": meta line lacks lang_a/lang_b");
  std::vector<SpaceDistanceCurve> curves;
  for (const auto& f : csv.rows) {
    if (curves.empty() || curves.back().config != f[2]) curves.push_back({*lang_a, *lang_b, f[2], {}});
    auto& c = curves.back();
    if (parse_int(f[0]) != static_cast<int>(c.values.size())) {
      throw ReportError(path.string() + ": layers of config " + f[2] + " are not 0, 1, 2, ...");
    }
    c.values.push_back(required_number(f[1]));
  }
  return curves;
}

// ---- neurons

void save_neuron_set(const std::filesystem::path& path, const KnowledgeNeuronSet& set, const OutputMeta& meta) {
  json per_layer = json::object();
  for (const auto& [l, indices] : set.per_layer) per_layer[std::to_string(l)] = indices;
  const json j{{"lang", set.lang}, {"relation", set.relation}, {"k", set.k}, {"per_layer", per_layer},
               {"version", kFormatVersion}, {"meta", meta_json(meta)}};
  write_file_atomic(path, j.dump(2) + "\n");
}

KnowledgeNeuronSet load_neuron_set(const std::filesystem::path& path) {
  const auto j = read_json_file(path);
  return with_path(path, [&] {
    KnowledgeNeuronSet s;
    s.lang = j.at("lang").get<std::string>();
    s.relation = j.at("relation").get<std::string>();
    s.k = int_field<int>(j, "k");
    if (s.k < 1) throw ValidationError(path.string() + ": k must be >= 1");
    for (const auto& [key, v] : j.at("per_layer").items()) {
      const int layer = parse_int(key);
      if (layer < 1) throw ValidationError(path.string() + ": layer keys start at 1");
      auto indices = v.get<std::vector<int>>();
      if (static_cast<int>(indices.size()) > s.k || !std::is_sorted(indices.begin(), indices.end()) ||
          std::adjacent_find(indices.begin(), indices.end()) != indices.end()) {
        throw ValidationError(path.string() + ": layer " + key + " needs at most k ascending unique indices");
      }
      s.per_layer[layer] = std::move(indices);
    }
    return s;
  });
}

void save_overlap_report(const std::filesystem::path& path, const std::vector<OverlapReport>& reports,
                         const OutputMeta& meta) {
  std::vector<std::vector<std::string>> out;
  for (const auto& r : reports) {
    out.push_back({"all", r.config, csv_number(r.same), csv_number(r.different), csv_number(r.avg)});
    for (std::size_t l = 0; l < r.per_layer_same.size(); ++l) {
      out.push_back({"layer_" + std::to_string(l + 1), r.config, format_double(r.per_layer_same[l]), "n/a", "n/a"});
    }
  }
  write_file_atomic(path, csv_text(meta, kOverlapHeader, out));
}

std::vector<OverlapReport> load_overlap_report(const std::filesystem::path& path) {
  const auto csv = read_csv(path, kOverlapHeader);
  std::vector<OverlapReport> reports;
  for (const auto& f : csv.rows) {
    if (f[0] == "all") {
      OverlapReport r;
      r.config = f[1];
      r.same = parse_number(f[2]);
      r.different = parse_number(f[3]);
      r.avg = parse_number(f[4]);
      reports.push_back(std::move(r));
      continue;
    }
    if (f[0].rfind("layer_", 0) != 0 || reports.empty() || reports.back().config != f[1]) {
      throw ReportError(path.string() + ": unexpected row scope '" + f[0] + "' for config " + f[1]);
    }
    auto& r = reports.back();
    if (parse_int(f[0].substr(6)) != static_cast<int>(r.per_layer_same.size()) + 1) {
      throw ReportError(path.string() + ": per-layer rows of " + f[1] + " out of order");
    }
    r.per_layer_same.push_back(required_number(f[2]));
  }
  return reports;
}

}  // namespace lrp2
