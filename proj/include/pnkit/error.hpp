#pragma once

#include <stdexcept>
#include <string>

namespace pnkit {

enum class Errc {
    unreadable_file,
    unsupported_format,
    dim_mismatch,
    tile_too_small,
    empty_histogram,
    invalid_level,
    shape_mismatch,
    empty_dataset,
    empty_class,
    missing_image,
    bad_label,
    duplicate_id,
    class_too_small,
    insufficient_descriptors,
    untrained_model,
    length_mismatch,
    empty_input,
    single_class,
    image_too_small,
    bad_config,
};

/// Library-wide exception carrying a machine-checkable error code.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& what) {
    throw Error(code, what);
}

}  // namespace pnkit
