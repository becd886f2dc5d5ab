#include "lrp2/intervention.hpp"

#include "lrp2/errors.hpp"

namespace lrp2 {

std::optional<std::string> validate_spec(const InterventionSpec& spec, const ModelConfig& config) {
  const int i = spec.lirp_layer;
  const int j = spec.lsrp_layer;
  const int L = config.num_layers;
  if (i < 1) return "1 <= i required";
  if (i >= L) return "i < L required";
  if (i >= j) return "i < j required";
  if (j > L) return "j <= L required";
  return std::nullopt;
}

template <typename T>
BasicHook<T> make_shift_hook(int layer, std::vector<float> delta) {
  return BasicHook<T>{layer, [delta = std::move(delta)](const Matrix<T>& h) {
                if (h.cols() != delta.size()) {
                  throw InputError("shift of width " + std::to_string(delta.size()) +
                                   " applied to hidden width " + std::to_string(h.cols()));
                }
                Matrix<T> out = h;
                for (std::size_t p = 0; p < out.rows(); ++p) {
                  for (std::size_t c = 0; c < out.cols(); ++c) out(p, c) += static_cast<T>(delta[c]);
                }
                return out;
              }};
}

template BasicHook<float> make_shift_hook(int, std::vector<float>);
template BasicHook<double> make_shift_hook(int, std::vector<float>);

namespace {

void check_vectors(const InterventionSpec& spec, const ModelConfig& config) {
  if (auto violation = validate_spec(spec, config)) throw ConfigError(*violation);
  if (!spec.lang_vectors || !spec.pivot_vectors) throw ConfigError("intervention needs both vector sets");
  for (const auto* set : {spec.lang_vectors, spec.pivot_vectors}) {
    if (set->num_layers() != config.num_layers || set->hidden_dim() != config.hidden_dim) {
      throw ConfigError("language vectors for " + set->lang + " have shape [" +
                        std::to_string(set->num_layers()) + ", " + std::to_string(set->hidden_dim()) +
                        "], model expects [" + std::to_string(config.num_layers) + ", " +
                        std::to_string(config.hidden_dim) + "]");
    }
  }
}

std::vector<float> difference(std::span<const float> to, std::span<const float> from) {
  std::vector<float> d(to.size());
  for (std::size_t c = 0; c < d.size(); ++c) d[c] = to[c] - from[c];
  return d;
}

template <typename T>
BasicHook<T> lirp_as(const InterventionSpec& spec, const ModelConfig& config) {
  check_vectors(spec, config);
  const int i = spec.lirp_layer;
  return make_shift_hook<T>(i, difference(spec.pivot_vectors->layer(i), spec.lang_vectors->layer(i)));
}

template <typename T>
BasicHook<T> lsrp_as(const InterventionSpec& spec, const ModelConfig& config) {
  check_vectors(spec, config);
  const int j = spec.lsrp_layer;
  return make_shift_hook<T>(j, difference(spec.lang_vectors->layer(j), spec.pivot_vectors->layer(j)));
}

}  // namespace

Hook make_lirp(const InterventionSpec& spec, const ModelConfig& config) { return lirp_as<float>(spec, config); }

Hook make_lsrp(const InterventionSpec& spec, const ModelConfig& config) { return lsrp_as<float>(spec, config); }

std::vector<Hook> make_hooks(const InterventionSpec& spec, const ModelConfig& config) {
  return {make_lirp(spec, config), make_lsrp(spec, config)};
}

std::vector<BasicHook<double>> make_hooks64(const InterventionSpec& spec, const ModelConfig& config) {
  return {lirp_as<double>(spec, config), lsrp_as<double>(spec, config)};
}

}  // namespace lrp2
