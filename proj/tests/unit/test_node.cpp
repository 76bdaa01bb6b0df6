#include <doctest.h>

#include <cstring>
#include <random>

#include "hxit/error.hpp"
#include "hxit/node.hpp"

using namespace hxit;

namespace {

DataNode random_tree(std::mt19937& rng, int depth) {
  std::uniform_int_distribution<int> kind(0, depth > 0 ? 6 : 5);
  std::uniform_int_distribution<int> len(0, 9);
  std::uniform_real_distribution<double> real(-1e6, 1e6);
  switch (kind(rng)) {
    case 0: return DataNode::int64(static_cast<int64_t>(rng()) - (1 << 30));
    case 1: return DataNode::float64(real(rng));
    case 2: {
      std::string s;
      for (int i = len(rng); i > 0; --i) s += static_cast<char>('a' + rng() % 26);
      return DataNode::string(std::move(s));
    }
    case 3: {
      std::vector<int64_t> v;
      for (int i = len(rng); i > 0; --i) v.push_back(static_cast<int64_t>(rng()));
      return DataNode::int64_array(std::move(v));
    }
    case 4: {
      std::vector<double> v;
      for (int i = len(rng); i > 0; --i) v.push_back(real(rng));
      return DataNode::float64_array(std::move(v));
    }
    case 5: {
      std::vector<uint8_t> v;
      for (int i = len(rng); i > 0; --i) v.push_back(static_cast<uint8_t>(rng()));
      return DataNode::uint8_array(std::move(v));
    }
    default: {
      DataNode obj;
      int n = len(rng) % 4;
      for (int i = 0; i < n; ++i)
        obj.child("k" + std::to_string(i)) = random_tree(rng, depth - 1);
      return obj;
    }
  }
}

} // namespace

TEST_SUITE("node") {

TEST_CASE("float64 scalar serializes as tag plus little-endian payload") {
  auto bytes = serialize_node(DataNode::float64(3.0));
  // 3.0 = 0x4008000000000000
  std::vector<uint8_t> want{0x02, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x08, 0x40};
  CHECK(bytes == want);
}

TEST_CASE("int64 scalar serializes little-endian") {
  auto bytes = serialize_node(DataNode::int64(-1));
  std::vector<uint8_t> want{0x01, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff};
  CHECK(bytes == want);
}

TEST_CASE("empty object is a tag plus zero child count") {
  auto bytes = serialize_node(DataNode{});
  std::vector<uint8_t> want{0x00, 0x00, 0x00, 0x00, 0x00};
  CHECK(bytes == want);
}

TEST_CASE("object child entries carry u16 name length, name, child") {
  DataNode obj;
  obj.child("ab") = DataNode::int64(7);
  auto bytes = serialize_node(obj);
  std::vector<uint8_t> want{0x00, 0x01, 0x00, 0x00, 0x00, // object, 1 child
                            0x02, 0x00, 'a',  'b',        // name
                            0x01, 7,    0,    0,    0,   0, 0, 0, 0};
  CHECK(bytes == want);
}

TEST_CASE("round trip preserves structure, order and bits") {
  std::mt19937 rng(20240811);
  for (int i = 0; i < 200; ++i) {
    DataNode tree = random_tree(rng, 4);
    auto bytes = serialize_node(tree);
    CHECK(bytes.size() == tree.serialized_size());
    DataNode back = deserialize_node(bytes);
    CHECK(back == tree);
    CHECK(serialize_node(back) == bytes);
  }
}

TEST_CASE("negative zero and zero are distinct trees") {
  CHECK(DataNode::float64(0.0) != DataNode::float64(-0.0));
  CHECK(DataNode::float64(0.0) == DataNode::float64(0.0));
}

TEST_CASE("child order is insertion order and affects equality") {
  DataNode a, b;
  a.child("x") = DataNode::int64(1);
  a.child("y") = DataNode::int64(2);
  b.child("y") = DataNode::int64(2);
  b.child("x") = DataNode::int64(1);
  CHECK(a.child_name(0) == "x");
  CHECK(b.child_name(0) == "y");
  CHECK(a != b);
}

TEST_CASE("set creates intermediate objects and find resolves paths") {
  DataNode root;
  root.set("a/b/c", DataNode::string("deep"));
  REQUIRE(root.find("a/b/c") != nullptr);
  CHECK(root.find("a/b/c")->as_string() == "deep");
  CHECK(root.find("a/missing") == nullptr);
  CHECK(root.find("a/b/c/beyond") == nullptr); // path through a leaf
  root.set("a/b/c", DataNode::int64(4));       // replace
  CHECK(root.find("a/b/c")->as_int64() == 4);
  CHECK_THROWS_AS(root.set("a/b/c/d", DataNode::int64(1)), Error);
}

TEST_CASE("external arrays alias storage but serialize by copy") {
  std::vector<double> owned{1.5, 2.5, 3.5};
  DataNode ext = DataNode::external_float64_array(owned.data(), owned.size());
  CHECK(ext.external());
  CHECK(ext.as_float64_array().data() == owned.data());

  DataNode copy = DataNode::float64_array({1.5, 2.5, 3.5});
  CHECK(ext == copy);
  CHECK(serialize_node(ext) == serialize_node(copy));

  DataNode back = deserialize_node(serialize_node(ext));
  CHECK_FALSE(back.external());
  CHECK(back == copy);
}

TEST_CASE("decode rejects malformed buffers with distinct codes") {
  auto code_of = [](const std::vector<uint8_t>& bytes) {
    try {
      deserialize_node(bytes);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Structural;
  };

  CHECK(code_of({}) == ErrorCode::DecodeTruncated);
  CHECK(code_of({0x02, 0x00, 0x00}) == ErrorCode::DecodeTruncated);
  CHECK(code_of({0x07}) == ErrorCode::DecodeUnknownTag);

  // float64 array claiming 2^61 elements
  std::vector<uint8_t> huge{0x05, 0, 0, 0, 0, 0, 0, 0, 0x20};
  CHECK(code_of(huge) == ErrorCode::DecodeLengthOverflow);

  auto ok = serialize_node(DataNode::int64(5));
  ok.push_back(0x00);
  CHECK(code_of(ok) == ErrorCode::DecodeTrailingBytes);
}

TEST_CASE("typed accessors reject wrong kinds") {
  DataNode n = DataNode::int64(3);
  CHECK(n.as_int64() == 3);
  CHECK_THROWS_AS(n.as_string(), Error);
  CHECK_THROWS_AS(n.as_float64_array(), Error);
  DataNode obj;
  CHECK_THROWS_AS(obj.as_int64(), Error);
}

TEST_CASE("child on a leaf is structural") {
  DataNode leaf = DataNode::int64(1);
  CHECK_THROWS_AS(leaf.child("x"), Error);
}

} // TEST_SUITE
