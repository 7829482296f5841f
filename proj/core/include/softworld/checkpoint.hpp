#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "softworld/autograd.hpp"

namespace softworld::nn {

/// Checkpoint file layout: one line of JSON
///   {"format":"softworld-ckpt-1","meta":{...},"params":[{name,shape,offset},...]}
/// terminated by '\n', followed by a little-endian float32 blob. Offsets are
/// element counts into the blob. Loading matches parameters by name.
void save_checkpoint(const std::filesystem::path& path,
                     std::span<const ag::Parameter* const> params,
                     const nlohmann::json& meta = nlohmann::json::object());

/// Restores values for every parameter in `params` (all must be present in
/// the file with matching shapes). Extra entries in the file are ignored.
void load_checkpoint(const std::filesystem::path& path, std::span<ag::Parameter* const> params);

nlohmann::json checkpoint_meta(const std::filesystem::path& path);

/// (name, shape) pairs in file order.
std::vector<std::pair<std::string, std::vector<int64_t>>> checkpoint_index(
    const std::filesystem::path& path);

}  // namespace softworld::nn
