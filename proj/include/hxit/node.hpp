#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hxit/error.hpp"

namespace hxit {

/// Wire kind tags. The numeric values are part of the serialized format.
enum class NodeKind : uint8_t {
  Object = 0x00,
  Int64 = 0x01,
  Float64 = 0x02,
  String = 0x03,
  Int64Array = 0x04,
  Float64Array = 0x05,
  Uint8Array = 0x06,
};

const char* node_kind_name(NodeKind kind);

/// Hierarchical typed data tree: the single container for control messages
/// and mesh payloads. Object nodes hold an ordered name->child map (insertion
/// order, serialized); leaf nodes hold one scalar or one contiguous array.
///
/// Arrays may alias producer-owned storage ("external"). External arrays are
/// never mutated through this class and serialization always copies them, so
/// a deserialized tree owns all of its data.
class DataNode {
public:
  DataNode() : kind_(NodeKind::Object) {}
  DataNode(const DataNode& other);
  DataNode(DataNode&& other) noexcept;
  DataNode& operator=(const DataNode& other);
  DataNode& operator=(DataNode&& other) noexcept;
  ~DataNode();

  static DataNode int64(int64_t v);
  static DataNode float64(double v);
  static DataNode string(std::string v);
  static DataNode int64_array(std::vector<int64_t> v);
  static DataNode float64_array(std::vector<double> v);
  static DataNode uint8_array(std::vector<uint8_t> v);

  // Aliases producer-owned storage; caller keeps it alive and unmodified for
  // the lifetime of the node (and of any copies made from it).
  static DataNode external_int64_array(const int64_t* data, size_t count);
  static DataNode external_float64_array(const double* data, size_t count);
  static DataNode external_uint8_array(const uint8_t* data, size_t count);

  NodeKind kind() const { return kind_; }
  bool is_object() const { return kind_ == NodeKind::Object; }
  bool is_leaf() const { return kind_ != NodeKind::Object; }
  bool external() const { return ext_data_ != nullptr; }

  int64_t as_int64() const;
  double as_float64() const;
  const std::string& as_string() const;
  std::span<const int64_t> as_int64_array() const;
  std::span<const double> as_float64_array() const;
  std::span<const uint8_t> as_uint8_array() const;

  size_t child_count() const;
  const std::string& child_name(size_t index) const;
  const DataNode& child_at(size_t index) const;
  DataNode& child_at(size_t index);

  /// Direct child by name, or nullptr. Object nodes only (leaf -> nullptr).
  const DataNode* child_ptr(std::string_view name) const;

  /// Direct child by name, created as an empty object if missing.
  /// Throws Structural when called on a leaf or with an invalid name.
  DataNode& child(std::string_view name);

  /// Sets the node at a slash-separated path, creating intermediate object
  /// nodes as needed; an existing node at the path is replaced. The empty
  /// path assigns to this node itself.
  /// Throws Structural when the path traverses an existing leaf or contains
  /// an empty segment.
  DataNode& set(std::string_view path, DataNode value);

  /// Node at a slash-separated path, or nullptr when absent. Absence is a
  /// value: paths through leaves or missing children return nullptr. The
  /// empty path is this node.
  const DataNode* find(std::string_view path) const;
  DataNode* find(std::string_view path);

  // Order-sensitive structural equality; numeric comparison is bit-exact
  // (doubles compared by bit pattern).
  bool operator==(const DataNode& other) const;
  bool operator!=(const DataNode& other) const { return !(*this == other); }

  /// Total serialized byte size, without serializing.
  size_t serialized_size() const;

private:
  struct Child;

  void copy_from(const DataNode& other);
  void destroy() noexcept;

  NodeKind kind_;
  std::vector<Child>* children_ = nullptr; // object kind only, lazily allocated
  int64_t i64_ = 0;
  double f64_ = 0.0;
  std::string str_;
  std::vector<int64_t> i64s_;
  std::vector<double> f64s_;
  std::vector<uint8_t> u8s_;
  const void* ext_data_ = nullptr;
  size_t ext_count_ = 0;

  friend void serialize_into(const DataNode& node, std::vector<uint8_t>& out);
};

/// Deterministic little-endian byte form of a tree (wire grammar:
/// kind:u8 then a kind-specific body; see transport framing docs).
std::vector<uint8_t> serialize_node(const DataNode& root);
void serialize_into(const DataNode& node, std::vector<uint8_t>& out);

/// Inverse of serialize_node. Throws DecodeTruncated, DecodeUnknownTag,
/// DecodeLengthOverflow or DecodeTrailingBytes on malformed input; no
/// partial tree is ever returned.
DataNode deserialize_node(std::span<const uint8_t> bytes);

} // namespace hxit
