#include "photoprior/error.hpp"

namespace photoprior {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::not_found: return "not_found";
    case Errc::io: return "io";
    case Errc::decode: return "decode";
    case Errc::encode: return "encode";
    case Errc::inference: return "inference";
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::fingerprint_mismatch: return "fingerprint_mismatch";
    case Errc::unsupported_version: return "unsupported_version";
    case Errc::dangling_reference: return "dangling_reference";
    case Errc::provider: return "provider";
    case Errc::empty_result: return "empty_result";
    case Errc::conflict: return "conflict";
  }
  return "unknown";
}

}  // namespace photoprior
