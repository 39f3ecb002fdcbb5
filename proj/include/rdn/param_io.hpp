#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "rdn/pipeline.hpp"
#include "rdn/relation.hpp"

namespace rdn {

/// Binary parameter container. All header fields are little-endian u64, all
/// payload values little-endian IEEE-754 binary64.
///
///   magic "RDNPARM1" | u64 version (1) | u64 num_basic | f64 r_percent
///   then blocks: num_basic relation modules, num_basic-1 transforms,
///   the advanced pool module, the advanced distill module, the head.
///
///   relation  : u64 1, d_model, d_k, d_rel, d_geo, heads, seed;
///               per head W_Q, W_K, W_V (row-major), W_G
///   transform : u64 2, d_model, activation (0 none, 1 relu); W (row-major), b
///   head      : u64 3, d_model, num_classes; W_cls, b_cls, W_reg, b_reg
inline constexpr char kParamMagic[8] = {'R', 'D', 'N', 'P', 'A', 'R', 'M', '1'};

void write_relation_block(std::ostream& out, const RelationModuleParams& params);
RelationModuleParams read_relation_block(std::istream& in);

void write_model(std::ostream& out, const ModelParams& model);
ModelParams read_model(std::istream& in);

/// Human-readable layout description: one line per block with byte offsets.
std::string model_manifest(const ModelParams& model);

/// Writes path and path + ".manifest". Throws IoError on failure.
void save_model(const std::filesystem::path& path, const ModelParams& model);
ModelParams load_model(const std::filesystem::path& path);

}  // namespace rdn
