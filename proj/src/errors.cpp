#include "modesleuth/errors.hpp"

namespace modesleuth {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::invalid_input: return "InvalidInput";
    case Errc::unstable_system: return "UnstableSystem";
    case Errc::not_psd: return "NotPsd";
    case Errc::spectrum_overlap: return "SpectrumOverlap";
    case Errc::invalid_times: return "InvalidTimes";
    case Errc::invalid_scheme: return "InvalidScheme";
    case Errc::singular_innovation: return "SingularInnovation";
    case Errc::degenerate_rates: return "DegenerateRates";
    case Errc::no_convergence: return "NoConvergence";
    case Errc::no_equilibrium: return "NoEquilibrium";
    case Errc::invalid_tree: return "InvalidTree";
    case Errc::invalid_graph: return "InvalidGraph";
    case Errc::non_uniform: return "NonUniform";
    case Errc::insufficient_band: return "InsufficientBand";
    case Errc::invalid_model: return "InvalidModel";
    case Errc::parse_error: return "ParseError";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

}  // namespace modesleuth
