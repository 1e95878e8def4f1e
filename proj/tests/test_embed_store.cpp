#include <bit>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "plmrec/embed_store.hpp"

using namespace plmrec;
using namespace plmrec::embed;

namespace {

std::string saved(const EmbeddingTable& t) {
  std::ostringstream out(std::ios::binary);
  save_embeddings(t, out);
  return out.str();
}

EmbeddingTable loaded(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return load_embeddings(in);
}

EmbeddingTable random_table(std::mt19937& gen, std::size_t rows, std::size_t dim) {
  std::normal_distribution<float> nd(0.f, 3.f);
  EmbeddingTable t(dim);
  while (t.size() < rows) {
    std::string key(1 + gen() % 12, 'a');
    for (auto& c : key) c = char(33 + gen() % 94);
    std::vector<float> v(dim);
    for (auto& x : v) x = nd(gen);
    t.insert(key, v);
  }
  return t;
}

}  // namespace

TEST(Embt, OneRowLayoutIs25Bytes) {
  EmbeddingTable t(2);
  t.insert("A", {1.0f, 0.0f});
  const auto bytes = saved(t);
  ASSERT_EQ(bytes.size(), 25u);
  const std::string expected("EMBT\x01\x00\x01\x00\x00\x00\x02\x00\x00\x00\x01\x00"
                             "A\x00\x00\x80\x3f\x00\x00\x00\x00",
                             25);
  EXPECT_EQ(bytes, expected);
}

TEST(Embt, RowsWrittenInKeyByteOrder) {
  EmbeddingTable t(1);
  t.insert("b", {2});
  t.insert("B", {1});
  t.insert("a", {3});
  const auto bytes = saved(t);
  EXPECT_EQ(bytes[16], 'B');
  EXPECT_EQ(bytes[16 + 1 + 4 + 2], 'a');
}

TEST(Embt, RoundTripRandomTables) {
  std::mt19937 gen(1234);
  for (int i = 0; i < 30; ++i) {
    const auto t = random_table(gen, 1 + gen() % 20, 1 + gen() % 40);
    const auto bytes = saved(t);
    EXPECT_EQ(loaded(bytes), t);
    EXPECT_EQ(saved(loaded(bytes)), bytes);
  }
}

TEST(Embt, EmptyTableIsPreconditionError) {
  EXPECT_EQ(error_kind([] { saved(EmbeddingTable(3)); }), ErrorKind::precondition);
}

TEST(Embt, OverlongKeyIsFormatError) {
  EmbeddingTable t(1);
  t.insert(std::string(65536, 'k'), {1});
  EXPECT_EQ(error_kind([&] { saved(t); }), ErrorKind::format);
  EmbeddingTable ok(1);
  ok.insert(std::string(65535, 'k'), {1});
  EXPECT_EQ(loaded(saved(ok)), ok);
}

TEST(Embt, BadMagicAndVersion) {
  EmbeddingTable t(2);
  t.insert("A", {1, 2});
  auto bytes = saved(t);
  auto magic = bytes;
  magic.replace(0, 4, "XXXX");
  EXPECT_EQ(error_kind([&] { loaded(magic); }), ErrorKind::format);
  auto version = bytes;
  version[4] = 2;
  std::string msg;
  EXPECT_EQ(error_kind([&] { loaded(version); }, &msg), ErrorKind::format);
  EXPECT_NE(msg.find("version"), std::string::npos);
}

TEST(Embt, TruncationNamesTheRow) {
  EmbeddingTable t(4);
  t.insert("first", {1, 2, 3, 4});
  t.insert("second", {5, 6, 7, 8});
  const auto bytes = saved(t);
  std::string msg;
  EXPECT_EQ(error_kind([&] { loaded(bytes.substr(0, bytes.size() - 5)); }, &msg), ErrorKind::format);
  EXPECT_NE(msg.find("row 1"), std::string::npos) << msg;
  EXPECT_NE(msg.find("second"), std::string::npos) << msg;
  EXPECT_EQ(error_kind([&] { loaded(bytes.substr(0, 9)); }), ErrorKind::format);
}

TEST(Embt, NonFiniteIsDataError) {
  EmbeddingTable t(2);
  t.insert("A", {1, 2});
  auto bytes = saved(t);
  const auto nan = std::bit_cast<std::uint32_t>(std::numeric_limits<float>::quiet_NaN());
  for (int b = 0; b < 4; ++b) bytes[21 + b] = char((nan >> (8 * b)) & 0xFF);
  EXPECT_EQ(error_kind([&] { loaded(bytes); }), ErrorKind::data);
}

TEST(Embt, UnsortedOrDuplicateKeysAndTrailingBytesRejected) {
  EmbeddingTable t(1);
  t.insert("A", {1});
  t.insert("B", {2});
  auto bytes = saved(t);
  auto swapped = bytes;
  swapped[16] = 'B';
  swapped[16 + 7] = 'A';
  EXPECT_EQ(error_kind([&] { loaded(swapped); }), ErrorKind::format);
  auto dup = bytes;
  dup[16 + 7] = 'A';
  EXPECT_EQ(error_kind([&] { loaded(dup); }), ErrorKind::format);
  EXPECT_EQ(error_kind([&] { loaded(bytes + "x"); }), ErrorKind::format);
}

TEST(EmbeddingTable, InsertValidatesDimAndFiniteness) {
  EmbeddingTable t(3);
  EXPECT_EQ(error_kind([&] { t.insert("k", {1, 2}); }), ErrorKind::dimension);
  EXPECT_EQ(error_kind([&] { t.insert("k", {1, 2, INFINITY}); }), ErrorKind::data);
  EXPECT_EQ(error_kind([&] { (void)t.at("missing"); }), ErrorKind::lookup);
}

TEST(Tsv, RoundTripAndErrors) {
  std::mt19937 gen(5);
  const auto t = random_table(gen, 7, 5);
  std::stringstream s;
  save_embeddings_tsv(t, s);
  EXPECT_EQ(load_embeddings_tsv(s), t);
  std::istringstream notab("key 1 2 3\n");
  EXPECT_EQ(error_kind([&] { load_embeddings_tsv(notab); }), ErrorKind::format);
  std::istringstream ragged("a\t1 2\nb\t1\n");
  EXPECT_EQ(error_kind([&] { load_embeddings_tsv(ragged); }), ErrorKind::dimension);
}

TEST(Cosine, Examples) {
  EXPECT_DOUBLE_EQ(cosine({1, 0}, {0, 1}), 0.0);
  EXPECT_NEAR(cosine({2, 2}, {1, 1}), 1.0, 1e-15);
  EXPECT_NEAR(cosine({3, 4}, {4, 3}), 24.0 / 25.0, 1e-15);
}

TEST(Cosine, Errors) {
  EXPECT_EQ(error_kind([] { cosine({0, 0}, {1, 1}); }), ErrorKind::similarity);
  EXPECT_EQ(error_kind([] { cosine({1, 0, 0}, {1, 1}); }), ErrorKind::dimension);
}

TEST(Cosine, SymmetricAndScaleInvariant) {
  std::mt19937 gen(9);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> a(6), b(6);
    for (auto& x : a) x = nd(gen);
    for (auto& x : b) x = nd(gen);
    const double lambda = scale(gen);
    auto la = a;
    for (auto& x : la) x *= lambda;
    const double c = cosine(a, b);
    EXPECT_NEAR(c, cosine(b, a), 1e-12);
    EXPECT_NEAR(c, cosine(la, b), 1e-12);
    EXPECT_GE(c, -1.0);
    EXPECT_LE(c, 1.0);
  }
}

TEST(Synthesize, DeterministicUnitNormAndTokenSharing) {
  const std::map<std::string, std::string> d = {{"1", "red heart holder"},
                                                {"2", "red heart box"},
                                                {"3", "glass jar"},
                                                {"4", "red heart holder"},
                                                {"5", ""}};
  const auto t = synthesize_embeddings(d, 64, 7);
  EXPECT_EQ(synthesize_embeddings(d, 64, 7), t);
  EXPECT_TRUE(std::ranges::equal(t.at("1"), t.at("4")));
  EXPECT_GT(cosine(t.at("1"), t.at("2")), cosine(t.at("1"), t.at("3")));
  for (const auto& [k, v] : t.rows()) EXPECT_NEAR(norm(std::span<const float>(v)), 1.0, 1e-6);
  const auto other = synthesize_embeddings(d, 64, 8);
  EXPECT_FALSE(std::ranges::equal(other.at("1"), t.at("1")));
  EXPECT_EQ(error_kind([&] { synthesize_embeddings(d, 1, 0); }), ErrorKind::precondition);
}

TEST(Synthesize, CaseAndPunctuationInsensitive) {
  const auto t = synthesize_embeddings({{"a", "RED HEART, T-LIGHT"}, {"b", "red heart t light"}}, 16, 0);
  EXPECT_TRUE(std::ranges::equal(t.at("a"), t.at("b")));
}
