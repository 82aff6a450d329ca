#include "procsim/losses.hpp"

namespace procsim {

void LossConfig::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw ConfigError("loss.alpha and loss.beta must be positive");
  if (!std::isfinite(delta)) throw ConfigError("loss.delta must be finite");
  if (!(omega >= 0.0)) throw ConfigError("loss.omega must be nonnegative");
  if (!(proxy_scale > 0.0)) throw ConfigError("loss.proxy_scale must be positive");
  if (top_k < 1) throw ConfigError("loss.top_k must be at least 1");
  if (!(contrastive_margin >= 0.0)) throw ConfigError("loss.contrastive_margin must be nonnegative");
  if (!(ssl_temperature > 0.0)) throw ConfigError("loss.ssl_temperature must be positive");
}

}  // namespace procsim
