#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "trimodal/dataset_io.hpp"

using namespace trimodal;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

TEST(DatasetIo, RoundTripIsExact) {
  GeneratorConfig c;
  c.seed = 31;
  const Dataset d = generate(c);
  const auto dir = fixtures::temp_dir("io_roundtrip");
  write_dataset(d, dir);
  const Dataset back = read_dataset(dir);
  EXPECT_TRUE(back == d);
  EXPECT_EQ(back.config.seed, 31u);
  EXPECT_EQ(config_to_json(back.config), config_to_json(d.config));
}

TEST(DatasetIo, SameConfigGivesSameBytes) {
  const auto a = fixtures::temp_dir("io_bytes_a"), b = fixtures::temp_dir("io_bytes_b");
  write_dataset(generate(fixtures::tiny_generator(4)), a);
  write_dataset(generate(fixtures::tiny_generator(4)), b);
  for (const char* f : {"manifest.json", "train.jsonl", "val.jsonl", "test.jsonl"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(DatasetIo, TruncatedFileNamesRecord) {
  const auto dir = fixtures::temp_dir("io_truncated");
  write_dataset(generate(fixtures::tiny_generator(5)), dir);
  std::string text = slurp(dir / "train.jsonl");
  const auto third = text.find('\n', text.find('\n', text.find('\n') + 1) + 1);
  spit(dir / "train.jsonl", text.substr(0, third + 40));
  try {
    read_dataset(dir);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("train.jsonl line 4 (record 3)"), std::string::npos) << msg;
  }
}

TEST(DatasetIo, MissingRecordsAreReported) {
  const auto dir = fixtures::temp_dir("io_missing");
  write_dataset(generate(fixtures::tiny_generator(5)), dir);
  const std::string text = slurp(dir / "val.jsonl");
  spit(dir / "val.jsonl", text.substr(0, text.find('\n') + 1));
  EXPECT_THROW(read_dataset(dir), ParseError);
}

TEST(DatasetIo, SeedMismatchIsRejected) {
  const auto dir = fixtures::temp_dir("io_seed");
  write_dataset(generate(fixtures::tiny_generator(6)), dir);
  std::string m = slurp(dir / "manifest.json");
  const auto pos = m.rfind("\"seed\": 6");  // top-level field, after generator
  ASSERT_NE(pos, std::string::npos);
  m.replace(pos, 9, "\"seed\": 7");
  spit(dir / "manifest.json", m);
  try {
    read_dataset(dir);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("does not match manifest seed"), std::string::npos) << e.what();
  }
}

TEST(DatasetIo, BadFieldIsReportedWithContext) {
  const auto dir = fixtures::temp_dir("io_field");
  write_dataset(generate(fixtures::tiny_generator(6)), dir);
  std::string text = slurp(dir / "test.jsonl");
  const auto pos = text.find("\"text\"");
  text.replace(pos, 6, "\"txet\"");
  spit(dir / "test.jsonl", text);
  try {
    read_dataset(dir);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("test.jsonl line 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'text'"), std::string::npos) << msg;
  }
}

TEST(DatasetIo, MissingDirectoryThrows) {
  EXPECT_THROW(read_dataset(fs::temp_directory_path() / "trimodal_no_such_dir"), ParseError);
}
