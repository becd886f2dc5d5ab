#pragma once

// Parameter-free residual shifts between a language's space and the pivot's.
// LIRP at layer i adds (v_pivot^i - v_l^i) to every row; LSRP at layer j adds
// (v_l^j - v_pivot^j).

#include <optional>
#include <string>
#include <vector>

#include "lrp2/engine.hpp"
#include "lrp2/langvec.hpp"

namespace lrp2 {

struct InterventionSpec {
  std::string lang;
  std::string pivot = "en";
  int lirp_layer = 1;
  int lsrp_layer = 2;
  const LanguageVectorSet* lang_vectors = nullptr;
  const LanguageVectorSet* pivot_vectors = nullptr;
};

// nullopt when 1 <= i < j <= L, else the violated bound, e.g. "i < j required".
std::optional<std::string> validate_spec(const InterventionSpec& spec, const ModelConfig& config);

// delta = to - from for one layer; the hook adds the same delta to every
// position.
template <typename T>
BasicHook<T> make_shift_hook(int layer, std::vector<float> delta);

// Both throw ConfigError on an invalid spec, missing vector sets, or vector
// sets whose [L, n] disagrees with the model.
Hook make_lirp(const InterventionSpec& spec, const ModelConfig& config);
Hook make_lsrp(const InterventionSpec& spec, const ModelConfig& config);

// {LIRP, LSRP} ready for forward. The double variant feeds 64-bit attribution.
std::vector<Hook> make_hooks(const InterventionSpec& spec, const ModelConfig& config);
std::vector<BasicHook<double>> make_hooks64(const InterventionSpec& spec, const ModelConfig& config);

}  // namespace lrp2
