#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace advgrad {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Writes bytes to `path` via a temporary sibling and a final rename, so a
/// failed run never leaves a partial file at the destination.
void write_file_atomic(const std::string& path, const std::string& bytes);

std::string read_file(const std::string& path);

void append_u32_le(std::string& out, uint32_t v);
void append_f32_le(std::string& out, float v);

}  // namespace advgrad
