#include <gtest/gtest.h>

#include <fstream>
#include <regex>
#include <sstream>

#include "rdn/error.hpp"
#include "rdn/param_io.hpp"
#include "test_support.hpp"

namespace rdn {
namespace {

ModelParams sample_model(std::uint64_t seed) {
  ModelParams m;
  m.basic = init_basic_stage(seed, testing::desk_dims(), 3);
  m.advanced = init_advanced_stage(seed + 1, testing::desk_dims(), 25.0);
  m.head = init_head(seed + 2, 16, 3);
  return m;
}

TEST(ParamIo, RoundTripIsExact) {
  const ModelParams m = sample_model(5);
  std::stringstream buf;
  write_model(buf, m);
  EXPECT_EQ(read_model(buf), m);
}

TEST(ParamIo, RelationBlockRoundTrip) {
  const auto p = init_params(77, {16, 8, 8, 16, 2});
  std::stringstream buf;
  write_relation_block(buf, p);
  EXPECT_EQ(read_relation_block(buf), p);
}

TEST(ParamIo, BadMagicAndTruncation) {
  std::stringstream junk("NOTPARAMS.......");
  EXPECT_THROW(read_model(junk), ValidationError);

  std::stringstream buf;
  write_model(buf, sample_model(1));
  const std::string bytes = buf.str();
  std::stringstream cut(bytes.substr(0, bytes.size() - 9));
  EXPECT_THROW(read_model(cut), ValidationError);
}

TEST(ParamIo, ManifestOffsetsPointAtBlockKinds) {
  const ModelParams m = sample_model(3);
  std::stringstream buf;
  write_model(buf, m);
  const std::string bytes = buf.str();
  const std::string manifest = model_manifest(m);

  const std::regex line(R"(block (\w+) role=\S+ offset=(\d+))");
  std::size_t blocks = 0;
  for (auto it = std::sregex_iterator(manifest.begin(), manifest.end(), line);
       it != std::sregex_iterator(); ++it) {
    const std::size_t offset = std::stoul((*it)[2]);
    const unsigned char kind = static_cast<unsigned char>(bytes.at(offset));
    const std::string name = (*it)[1];
    const unsigned char expected = name == "relation" ? 1 : name == "transform" ? 2 : 3;
    EXPECT_EQ(kind, expected) << name << " at " << offset;
    ++blocks;
  }
  EXPECT_EQ(blocks, 3u + 2u + 2u + 1u);
}

TEST(ParamIo, SaveWritesManifestAndLoads) {
  const auto dir = testing::scratch_dir("param_io");
  const ModelParams m = sample_model(8);
  save_model(dir / "p.bin", m);
  EXPECT_TRUE(std::filesystem::exists(dir / "p.bin.manifest"));
  EXPECT_EQ(load_model(dir / "p.bin"), m);
  EXPECT_THROW(load_model(dir / "missing.bin"), IoError);
}

}  // namespace
}  // namespace rdn
