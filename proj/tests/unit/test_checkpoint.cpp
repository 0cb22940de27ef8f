#include <doctest.h>

#include "lgnmt/checkpoint.hpp"
#include "temp_dir.hpp"

using namespace lgnmt;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.dim_model = 16;
  c.dim_ff = 24;
  c.n_encoder_layers = 2;
  c.n_decoder_layers = 1;
  c.n_heads = 4;
  c.dropout_rate = 0.1;
  c.src_vocab_size = 30;
  c.tgt_vocab_size = 25;
  c.max_len = 20;
  c.seed = 9;
  return c;
}

CheckpointError::Kind load_kind(const std::string& bytes) {
  try {
    deserialize_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  FAIL("expected CheckpointError");
  return CheckpointError::Kind::io;
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("round trip is exact") {
  const Model<float> m(small_config(), 4);
  testing::TempDir dir("ckpt");
  save_checkpoint(m, dir / "model.ckpt");
  const auto back = load_checkpoint(dir / "model.ckpt");
  CHECK(back == m);
  CHECK(serialize_checkpoint(back) == serialize_checkpoint(m));

  const auto src = make_source_batch({{5, 6, 7}, {8}});
  const auto tgt = make_target_batch({{9, 10}, {11, 12, 13}});
  CHECK(forward_logits(back, src, tgt.decoder_input) == forward_logits(m, src, tgt.decoder_input));
}

TEST_CASE("header carries the config") {
  const auto bytes = serialize_checkpoint(Model<float>(small_config(), 1));
  CHECK(bytes.rfind("LGNMT001", 0) == 0);
  CHECK(bytes.find("\"tgt_vocab_size\":25") != std::string::npos);
}

TEST_CASE("corruption gives typed errors") {
  const auto bytes = serialize_checkpoint(Model<float>(small_config(), 2));
  using K = CheckpointError::Kind;

  auto magic = bytes;
  magic[0] = 'X';
  CHECK(load_kind(magic) == K::bad_magic);

  auto version = bytes;
  version[7] = '9';
  CHECK(load_kind(version) == K::unsupported_version);

  CHECK(load_kind(bytes.substr(0, 4)) == K::truncated);
  CHECK(load_kind(bytes.substr(0, 20)) == K::truncated);
  CHECK(load_kind(bytes.substr(0, bytes.size() - 1)) == K::truncated);
  CHECK(load_kind(bytes + "extra") == K::layout_mismatch);
  CHECK(load_kind("") == K::truncated);

  auto len = bytes;
  len[8] = '\xff';
  len[9] = '\xff';
  len[10] = '\xff';
  len[11] = '\x7f';
  CHECK(load_kind(len) == K::truncated);

  auto header = bytes;
  header[12] = '[';
  CHECK(load_kind(header) == K::bad_header);
}

TEST_CASE("every single-byte corruption of the header is caught or harmless") {
  const auto bytes = serialize_checkpoint(Model<float>(small_config(), 3));
  const std::uint32_t header_len = std::uint32_t(std::uint8_t(bytes[8])) | std::uint32_t(std::uint8_t(bytes[9])) << 8 |
                                   std::uint32_t(std::uint8_t(bytes[10])) << 16 |
                                   std::uint32_t(std::uint8_t(bytes[11])) << 24;
  for (std::size_t i = 0; i < 12 + header_len; ++i) {
    auto b = bytes;
    b[i] = static_cast<char>(b[i] ^ 0x5a);
    try {
      const auto m = deserialize_checkpoint(b);
      CHECK(m.parameter_count() == count_parameters(m.config()));
    } catch (const Error&) {
    }
  }
}

TEST_CASE("missing file") {
  testing::TempDir dir("ckpt-missing");
  try {
    load_checkpoint(dir / "nope.ckpt");
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointError::Kind::io);
  }
}

}  // TEST_SUITE
