#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "lgnmt/errors.hpp"
#include "lgnmt/transformer.hpp"

namespace lgnmt {

// Layout: "LGNMT001", u32 little-endian header length, UTF-8 JSON header
// {"config": {...}, "tensors": [{"name","shape","dtype":"f32","offset"}]},
// then little-endian f32 data in directory order. Offsets are byte offsets
// into the data section.
class CheckpointError : public Error {
 public:
  enum class Kind { bad_magic, unsupported_version, truncated, bad_header, layout_mismatch, io };

  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

std::string serialize_checkpoint(const Model<float>& model);
Model<float> deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path);
Model<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace lgnmt
