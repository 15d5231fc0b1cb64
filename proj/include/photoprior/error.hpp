#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace photoprior {

enum class Errc {
  invalid_argument,
  not_found,
  io,
  decode,
  encode,
  inference,
  dimension_mismatch,
  fingerprint_mismatch,
  unsupported_version,
  dangling_reference,
  provider,
  empty_result,
  conflict,
};

std::string_view to_string(Errc code);

// Every failure raised by the library carries one of the codes above; the CLI
// maps them to exit codes and the service to HTTP statuses.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace photoprior
