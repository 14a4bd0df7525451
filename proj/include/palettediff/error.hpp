#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace palettediff {

enum class Errc {
  file_not_found,
  decode_error,
  io_error,
  dimension_mismatch,
  empty_mask,
  out_of_bounds,
  invalid_argument,
  size_mismatch,
  missing_texture,
  shape_mismatch,
  invalid_t,
  empty_dataset,
  frozen_violation,
  missing_checkpoint,
  bad_checkpoint,
  empty,
  too_small,
};

constexpr std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::file_not_found: return "file_not_found";
    case Errc::decode_error: return "decode_error";
    case Errc::io_error: return "io_error";
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::empty_mask: return "empty_mask";
    case Errc::out_of_bounds: return "out_of_bounds";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::size_mismatch: return "size_mismatch";
    case Errc::missing_texture: return "missing_texture";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::invalid_t: return "invalid_t";
    case Errc::empty_dataset: return "empty_dataset";
    case Errc::frozen_violation: return "frozen_violation";
    case Errc::missing_checkpoint: return "missing_checkpoint";
    case Errc::bad_checkpoint: return "bad_checkpoint";
    case Errc::empty: return "empty";
    case Errc::too_small: return "too_small";
  }
  return "unknown";
}

/// Every library failure carries a stable code; what() is "[code] message".
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error("[" + std::string(errc_name(code)) + "] " + message),
        code_(code),
        detail_(message) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace palettediff
