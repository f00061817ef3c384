#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace modesleuth {

enum class Errc {
  invalid_input,
  unstable_system,
  not_psd,
  spectrum_overlap,
  invalid_times,
  invalid_scheme,
  singular_innovation,
  degenerate_rates,
  no_convergence,
  no_equilibrium,
  invalid_tree,
  invalid_graph,
  non_uniform,
  insufficient_band,
  invalid_model,
  parse_error,
};

std::string_view to_string(Errc code);

/// Every failure raised by the library carries one of the codes above so that
/// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace modesleuth
