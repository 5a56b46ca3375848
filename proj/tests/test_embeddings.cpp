#include <catch2/catch_amalgamated.hpp>

#include "intentspace/embeddings.hpp"
#include "testutil.hpp"

using namespace intentspace;

TEST_CASE("tokenize rules") {
  CHECK(tokenize("Play Adele!") == std::vector<std::string>{"play", "adele"});
  CHECK(tokenize("  ").empty());
  CHECK(tokenize("") == std::vector<std::string>{});
  CHECK(tokenize("What's the weather?") ==
        std::vector<std::string>{"what's", "the", "weather"});
  CHECK(tokenize("...") == std::vector<std::string>{});
  CHECK(tokenize("(Hello)   WORLD??") == std::vector<std::string>{"hello", "world"});
}

TEST_CASE("load_embeddings computes oov as the mean") {
  testutil::TempDir tmp;
  std::string path = tmp.file("emb.txt");
  testutil::write_file(path, "a 1 0\nb 0 1\n");
  EmbeddingTable table = load_embeddings(path, 2);
  REQUIRE(table.entries.size() == 2);
  CHECK(table.oov_vector[0] == Catch::Approx(0.5));
  CHECK(table.oov_vector[1] == Catch::Approx(0.5));
}

TEST_CASE("load_embeddings single row oov equals that row") {
  testutil::TempDir tmp;
  std::string path = tmp.file("emb.txt");
  testutil::write_file(path, "only 0.25 -1.5 3\n");
  EmbeddingTable table = load_embeddings(path, 3);
  CHECK(table.oov_vector.data == table.entries.at("only").data);
}

TEST_CASE("load_embeddings empty file is a format error") {
  testutil::TempDir tmp;
  std::string path = tmp.file("emb.txt");
  testutil::write_file(path, "");
  CHECK_THROWS_AS(load_embeddings(path, 2), FormatError);
}

TEST_CASE("load_embeddings dimension mismatch names the line") {
  testutil::TempDir tmp;
  std::string path = tmp.file("emb.txt");
  testutil::write_file(path, "a 1 2\nb 1\n");
  try {
    load_embeddings(path, 2);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("load_embeddings malformed float is a parse error") {
  testutil::TempDir tmp;
  std::string path = tmp.file("emb.txt");
  testutil::write_file(path, "a 1 zz\n");
  CHECK_THROWS_AS(load_embeddings(path, 2), ParseError);
}

TEST_CASE("loading the same file twice is bitwise identical") {
  testutil::TempDir tmp;
  std::string path = tmp.file("emb.txt");
  testutil::write_file(path, "a 0.1 0.2\nb -0.3 0.7\nc 0.9 -0.11\n");
  EmbeddingTable t1 = load_embeddings(path, 2);
  EmbeddingTable t2 = load_embeddings(path, 2);
  CHECK(t1.oov_vector.data == t2.oov_vector.data);
  for (const auto& [token, vec] : t1.entries) {
    CHECK(t2.entries.at(token).data == vec.data);
  }
}

TEST_CASE("vocabulary restriction keeps the full-file oov mean") {
  testutil::TempDir tmp;
  std::string path = tmp.file("emb.txt");
  testutil::write_file(path, "a 1 0\nb 0 1\nc 1 1\n");
  std::unordered_set<std::string> vocab{"a"};
  EmbeddingTable table = load_embeddings(path, 2, &vocab);
  CHECK(table.entries.size() == 1);
  CHECK(table.oov_vector[0] == Catch::Approx(2.0 / 3.0));
  CHECK(table.oov_vector[1] == Catch::Approx(2.0 / 3.0));
}

TEST_CASE("encode_sentence known, unknown and mixed tokens") {
  testutil::TempDir tmp;
  std::string path = tmp.file("emb.txt");
  testutil::write_file(path, "a 1 0\nb 0 1\n");
  EmbeddingTable table = load_embeddings(path, 2);

  auto out = encode_sentence(table, {"a", "b"});
  REQUIRE(out.size() == 2);
  CHECK(out[0].data == std::vector<double>{1.0, 0.0});
  CHECK(out[1].data == std::vector<double>{0.0, 1.0});

  out = encode_sentence(table, {"zzz-unknown"});
  REQUIRE(out.size() == 1);
  CHECK(out[0].data == table.oov_vector.data);

  std::vector<std::string> tokens{"b", "nope", "a", "b"};
  out = encode_sentence(table, tokens);
  REQUIRE(out.size() == tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const Vector& want = table.entries.count(tokens[i]) != 0
                             ? table.entries.at(tokens[i])
                             : table.oov_vector;
    CHECK(out[i].data == want.data);
  }
}

TEST_CASE("encode_sentence rejects empty input") {
  EmbeddingTable table = testutil::synthetic_table({"x"}, 2, 1);
  CHECK_THROWS_AS(encode_sentence(table, {}), EmptyInputError);
}

TEST_CASE("encode_sentence is length preserving on random token lists") {
  EmbeddingTable table = testutil::synthetic_table({"t0", "t1", "t2"}, 4, 2);
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::string> tokens;
    std::size_t len = 1 + rng.below(6);
    for (std::size_t i = 0; i < len; ++i) {
      tokens.push_back("t" + std::to_string(rng.below(5)));  // some unknown
    }
    CHECK(encode_sentence(table, tokens).size() == tokens.size());
  }
}
