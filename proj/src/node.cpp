#include "hxit/node.hpp"

#include <bit>
#include <cstring>
#include <limits>
#include <utility>

namespace hxit {

struct DataNode::Child {
  std::string name;
  DataNode node;
};

const char* node_kind_name(NodeKind kind) {
  switch (kind) {
    case NodeKind::Object: return "object";
    case NodeKind::Int64: return "int64";
    case NodeKind::Float64: return "float64";
    case NodeKind::String: return "string";
    case NodeKind::Int64Array: return "int64_array";
    case NodeKind::Float64Array: return "float64_array";
    case NodeKind::Uint8Array: return "uint8_array";
  }
  return "?";
}

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::Structural: return "structural";
    case ErrorCode::DecodeTruncated: return "decode-truncated";
    case ErrorCode::DecodeUnknownTag: return "decode-unknown-tag";
    case ErrorCode::DecodeLengthOverflow: return "decode-length-overflow";
    case ErrorCode::DecodeTrailingBytes: return "decode-trailing-bytes";
    case ErrorCode::MeshMissingCoordset: return "mesh-missing-coordset";
    case ErrorCode::MeshBadCoordset: return "mesh-bad-coordset";
    case ErrorCode::MeshUnknownTopology: return "mesh-unknown-topology";
    case ErrorCode::MeshConnectivityRange: return "mesh-connectivity-range";
    case ErrorCode::MeshFieldLength: return "mesh-field-length";
    case ErrorCode::MeshNonScalarField: return "mesh-non-scalar-field";
    case ErrorCode::PipelineEmpty: return "pipeline-empty";
    case ErrorCode::PipelineMissingField: return "pipeline-missing-field";
    case ErrorCode::PipelineStageMismatch: return "pipeline-stage-mismatch";
    case ErrorCode::SliceOutOfBounds: return "slice-out-of-bounds";
    case ErrorCode::TransportConnect: return "transport-connect";
    case ErrorCode::TransportHandshake: return "transport-handshake";
    case ErrorCode::TransportStepOrder: return "transport-step-order";
    case ErrorCode::TransportBroken: return "transport-broken";
    case ErrorCode::ProtocolBadMagic: return "protocol-bad-magic";
    case ErrorCode::ProtocolBadVersion: return "protocol-bad-version";
    case ErrorCode::ProtocolTruncated: return "protocol-truncated";
    case ErrorCode::ReplayRankCountConflict: return "replay-rank-count-conflict";
    case ErrorCode::ReplayDuplicateStep: return "replay-duplicate-step";
    case ErrorCode::ReplayIncompleteStep: return "replay-incomplete-step";
    case ErrorCode::ConfigInvalid: return "config-invalid";
    case ErrorCode::GatewayFinalized: return "gateway-finalized";
    case ErrorCode::GatewayTimestepOrder: return "gateway-timestep-order";
    case ErrorCode::GatewayState: return "gateway-state";
    case ErrorCode::RenderMissingField: return "render-missing-field";
    case ErrorCode::RenderBadMesh: return "render-bad-mesh";
    case ErrorCode::ReportMismatch: return "report-mismatch";
    case ErrorCode::Io: return "io";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// construction / rule of five
// ---------------------------------------------------------------------------

DataNode::~DataNode() { destroy(); }

void DataNode::destroy() noexcept {
  delete children_;
  children_ = nullptr;
}

void DataNode::copy_from(const DataNode& other) {
  kind_ = other.kind_;
  children_ = other.children_ ? new std::vector<Child>(*other.children_) : nullptr;
  i64_ = other.i64_;
  f64_ = other.f64_;
  str_ = other.str_;
  i64s_ = other.i64s_;
  f64s_ = other.f64s_;
  u8s_ = other.u8s_;
  ext_data_ = other.ext_data_;
  ext_count_ = other.ext_count_;
}

DataNode::DataNode(const DataNode& other) : kind_(NodeKind::Object) { copy_from(other); }

DataNode::DataNode(DataNode&& other) noexcept
    : kind_(other.kind_),
      children_(std::exchange(other.children_, nullptr)),
      i64_(other.i64_),
      f64_(other.f64_),
      str_(std::move(other.str_)),
      i64s_(std::move(other.i64s_)),
      f64s_(std::move(other.f64s_)),
      u8s_(std::move(other.u8s_)),
      ext_data_(std::exchange(other.ext_data_, nullptr)),
      ext_count_(std::exchange(other.ext_count_, 0)) {
  other.kind_ = NodeKind::Object;
}

DataNode& DataNode::operator=(const DataNode& other) {
  if (this != &other) {
    destroy();
    copy_from(other);
  }
  return *this;
}

DataNode& DataNode::operator=(DataNode&& other) noexcept {
  if (this != &other) {
    destroy();
    kind_ = other.kind_;
    children_ = std::exchange(other.children_, nullptr);
    i64_ = other.i64_;
    f64_ = other.f64_;
    str_ = std::move(other.str_);
    i64s_ = std::move(other.i64s_);
    f64s_ = std::move(other.f64s_);
    u8s_ = std::move(other.u8s_);
    ext_data_ = std::exchange(other.ext_data_, nullptr);
    ext_count_ = std::exchange(other.ext_count_, 0);
    other.kind_ = NodeKind::Object;
  }
  return *this;
}

DataNode DataNode::int64(int64_t v) {
  DataNode n;
  n.kind_ = NodeKind::Int64;
  n.i64_ = v;
  return n;
}

DataNode DataNode::float64(double v) {
  DataNode n;
  n.kind_ = NodeKind::Float64;
  n.f64_ = v;
  return n;
}

DataNode DataNode::string(std::string v) {
  DataNode n;
  n.kind_ = NodeKind::String;
  n.str_ = std::move(v);
  return n;
}

DataNode DataNode::int64_array(std::vector<int64_t> v) {
  DataNode n;
  n.kind_ = NodeKind::Int64Array;
  n.i64s_ = std::move(v);
  return n;
}

DataNode DataNode::float64_array(std::vector<double> v) {
  DataNode n;
  n.kind_ = NodeKind::Float64Array;
  n.f64s_ = std::move(v);
  return n;
}

DataNode DataNode::uint8_array(std::vector<uint8_t> v) {
  DataNode n;
  n.kind_ = NodeKind::Uint8Array;
  n.u8s_ = std::move(v);
  return n;
}

DataNode DataNode::external_int64_array(const int64_t* data, size_t count) {
  DataNode n;
  n.kind_ = NodeKind::Int64Array;
  n.ext_data_ = data;
  n.ext_count_ = count;
  return n;
}

DataNode DataNode::external_float64_array(const double* data, size_t count) {
  DataNode n;
  n.kind_ = NodeKind::Float64Array;
  n.ext_data_ = data;
  n.ext_count_ = count;
  return n;
}

DataNode DataNode::external_uint8_array(const uint8_t* data, size_t count) {
  DataNode n;
  n.kind_ = NodeKind::Uint8Array;
  n.ext_data_ = data;
  n.ext_count_ = count;
  return n;
}

// ---------------------------------------------------------------------------
// typed access
// ---------------------------------------------------------------------------

namespace {
[[noreturn]] void wrong_kind(NodeKind have, const char* want) {
  fail(ErrorCode::Structural,
       std::string("node is ") + node_kind_name(have) + ", not " + want);
}
} // namespace

int64_t DataNode::as_int64() const {
  if (kind_ != NodeKind::Int64) wrong_kind(kind_, "int64");
  return i64_;
}

double DataNode::as_float64() const {
  if (kind_ != NodeKind::Float64) wrong_kind(kind_, "float64");
  return f64_;
}

const std::string& DataNode::as_string() const {
  if (kind_ != NodeKind::String) wrong_kind(kind_, "string");
  return str_;
}

std::span<const int64_t> DataNode::as_int64_array() const {
  if (kind_ != NodeKind::Int64Array) wrong_kind(kind_, "int64_array");
  if (ext_data_) return {static_cast<const int64_t*>(ext_data_), ext_count_};
  return {i64s_.data(), i64s_.size()};
}

std::span<const double> DataNode::as_float64_array() const {
  if (kind_ != NodeKind::Float64Array) wrong_kind(kind_, "float64_array");
  if (ext_data_) return {static_cast<const double*>(ext_data_), ext_count_};
  return {f64s_.data(), f64s_.size()};
}

std::span<const uint8_t> DataNode::as_uint8_array() const {
  if (kind_ != NodeKind::Uint8Array) wrong_kind(kind_, "uint8_array");
  if (ext_data_) return {static_cast<const uint8_t*>(ext_data_), ext_count_};
  return {u8s_.data(), u8s_.size()};
}

// ---------------------------------------------------------------------------
// children and paths
// ---------------------------------------------------------------------------

size_t DataNode::child_count() const {
  return children_ ? children_->size() : 0;
}

const std::string& DataNode::child_name(size_t index) const {
  return (*children_)[index].name;
}

const DataNode& DataNode::child_at(size_t index) const {
  return (*children_)[index].node;
}

DataNode& DataNode::child_at(size_t index) {
  return (*children_)[index].node;
}

const DataNode* DataNode::child_ptr(std::string_view name) const {
  if (kind_ != NodeKind::Object || !children_) return nullptr;
  for (const Child& c : *children_) {
    if (c.name == name) return &c.node;
  }
  return nullptr;
}

namespace {
void check_child_name(std::string_view name) {
  if (name.empty()) fail(ErrorCode::Structural, "empty child name");
  if (name.find('/') != std::string_view::npos)
    fail(ErrorCode::Structural, "child name contains '/': " + std::string(name));
  if (name.size() > std::numeric_limits<uint16_t>::max())
    fail(ErrorCode::Structural, "child name longer than 65535 bytes");
}
} // namespace

DataNode& DataNode::child(std::string_view name) {
  check_child_name(name);
  if (kind_ != NodeKind::Object)
    fail(ErrorCode::Structural,
         std::string("cannot descend into ") + node_kind_name(kind_) + " node at '" +
             std::string(name) + "'");
  if (!children_) children_ = new std::vector<Child>();
  for (Child& c : *children_) {
    if (c.name == name) return c.node;
  }
  children_->push_back(Child{std::string(name), DataNode()});
  return children_->back().node;
}

DataNode& DataNode::set(std::string_view path, DataNode value) {
  if (path.empty()) {
    *this = std::move(value);
    return *this;
  }
  DataNode* cur = this;
  std::string_view rest = path;
  while (true) {
    size_t slash = rest.find('/');
    std::string_view seg = (slash == std::string_view::npos) ? rest : rest.substr(0, slash);
    if (slash == std::string_view::npos) {
      check_child_name(seg);
      if (cur->kind_ != NodeKind::Object)
        fail(ErrorCode::Structural,
             "path '" + std::string(path) + "' traverses a leaf node");
      DataNode& slot = cur->child(seg);
      slot = std::move(value);
      return slot;
    }
    cur = &cur->child(seg); // validates seg and object-ness
    rest = rest.substr(slash + 1);
  }
}

const DataNode* DataNode::find(std::string_view path) const {
  const DataNode* cur = this;
  std::string_view rest = path;
  while (!rest.empty()) {
    size_t slash = rest.find('/');
    std::string_view seg = (slash == std::string_view::npos) ? rest : rest.substr(0, slash);
    cur = cur->child_ptr(seg);
    if (!cur) return nullptr;
    if (slash == std::string_view::npos) break;
    rest = rest.substr(slash + 1);
  }
  return cur;
}

DataNode* DataNode::find(std::string_view path) {
  return const_cast<DataNode*>(std::as_const(*this).find(path));
}

// ---------------------------------------------------------------------------
// equality
// ---------------------------------------------------------------------------

namespace {
bool bits_equal(double a, double b) {
  return std::bit_cast<uint64_t>(a) == std::bit_cast<uint64_t>(b);
}
} // namespace

bool DataNode::operator==(const DataNode& other) const {
  if (kind_ != other.kind_) return false;
  switch (kind_) {
    case NodeKind::Object: {
      size_t n = child_count();
      if (n != other.child_count()) return false;
      for (size_t i = 0; i < n; ++i) {
        if (child_name(i) != other.child_name(i)) return false;
        if (!(child_at(i) == other.child_at(i))) return false;
      }
      return true;
    }
    case NodeKind::Int64:
      return i64_ == other.i64_;
    case NodeKind::Float64:
      return bits_equal(f64_, other.f64_);
    case NodeKind::String:
      return str_ == other.str_;
    case NodeKind::Int64Array: {
      auto a = as_int64_array(), b = other.as_int64_array();
      return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size_bytes()) == 0;
    }
    case NodeKind::Float64Array: {
      auto a = as_float64_array(), b = other.as_float64_array();
      return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size_bytes()) == 0;
    }
    case NodeKind::Uint8Array: {
      auto a = as_uint8_array(), b = other.as_uint8_array();
      return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size_bytes()) == 0;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// serialization (little-endian, deterministic)
// ---------------------------------------------------------------------------

namespace {

void put_u8(std::vector<uint8_t>& out, uint8_t v) { out.push_back(v); }

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_i64(std::vector<uint8_t>& out, int64_t v) { put_u64(out, static_cast<uint64_t>(v)); }

void put_f64(std::vector<uint8_t>& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

} // namespace

size_t DataNode::serialized_size() const {
  size_t total = 1; // kind tag
  switch (kind_) {
    case NodeKind::Object: {
      total += 4;
      for (size_t i = 0; i < child_count(); ++i)
        total += 2 + child_name(i).size() + child_at(i).serialized_size();
      break;
    }
    case NodeKind::Int64:
    case NodeKind::Float64:
      total += 8;
      break;
    case NodeKind::String:
      total += 8 + str_.size();
      break;
    case NodeKind::Int64Array:
      total += 8 + as_int64_array().size_bytes();
      break;
    case NodeKind::Float64Array:
      total += 8 + as_float64_array().size_bytes();
      break;
    case NodeKind::Uint8Array:
      total += 8 + as_uint8_array().size_bytes();
      break;
  }
  return total;
}

void serialize_into(const DataNode& node, std::vector<uint8_t>& out) {
  put_u8(out, static_cast<uint8_t>(node.kind_));
  switch (node.kind_) {
    case NodeKind::Object: {
      put_u32(out, static_cast<uint32_t>(node.child_count()));
      for (size_t i = 0; i < node.child_count(); ++i) {
        const std::string& name = node.child_name(i);
        put_u16(out, static_cast<uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        serialize_into(node.child_at(i), out);
      }
      break;
    }
    case NodeKind::Int64:
      put_i64(out, node.i64_);
      break;
    case NodeKind::Float64:
      put_f64(out, node.f64_);
      break;
    case NodeKind::String:
      put_u64(out, node.str_.size());
      out.insert(out.end(), node.str_.begin(), node.str_.end());
      break;
    case NodeKind::Int64Array: {
      auto a = node.as_int64_array();
      put_u64(out, a.size());
      for (int64_t v : a) put_i64(out, v);
      break;
    }
    case NodeKind::Float64Array: {
      auto a = node.as_float64_array();
      put_u64(out, a.size());
      for (double v : a) put_f64(out, v);
      break;
    }
    case NodeKind::Uint8Array: {
      auto a = node.as_uint8_array();
      put_u64(out, a.size());
      out.insert(out.end(), a.begin(), a.end());
      break;
    }
  }
}

std::vector<uint8_t> serialize_node(const DataNode& root) {
  std::vector<uint8_t> out;
  out.reserve(root.serialized_size());
  serialize_into(root, out);
  return out;
}

namespace {

class Cursor {
public:
  explicit Cursor(std::span<const uint8_t> bytes) : bytes_(bytes) {}

  size_t remaining() const { return bytes_.size() - pos_; }
  size_t position() const { return pos_; }

  uint8_t u8() {
    need_fixed(1);
    return bytes_[pos_++];
  }

  uint16_t u16() {
    need_fixed(2);
    uint16_t v = static_cast<uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }

  uint32_t u32() {
    need_fixed(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  uint64_t u64() {
    need_fixed(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  /// Fixed-width payload: running out of bytes here is truncation, not a
  /// length declared wrong.
  std::span<const uint8_t> fixed(size_t n) {
    need_fixed(n);
    std::span<const uint8_t> s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::span<const uint8_t> declared(uint64_t count, size_t elem_size, const char* what) {
    if (count > remaining() / elem_size)
      fail(ErrorCode::DecodeLengthOverflow,
           std::string(what) + " declares " + std::to_string(count) +
               " elements but only " + std::to_string(remaining()) + " bytes remain");
    std::span<const uint8_t> s = bytes_.subspan(pos_, count * elem_size);
    pos_ += count * elem_size;
    return s;
  }

private:
  void need_fixed(size_t n) {
    if (remaining() < n)
      fail(ErrorCode::DecodeTruncated,
           "input truncated at byte " + std::to_string(pos_));
  }

  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

int64_t load_i64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return static_cast<int64_t>(v);
}

double load_f64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

DataNode read_node(Cursor& cur) {
  uint8_t tag = cur.u8();
  if (tag > static_cast<uint8_t>(NodeKind::Uint8Array))
    fail(ErrorCode::DecodeUnknownTag, "unknown kind tag 0x" + [tag] {
      static const char* hex = "0123456789ABCDEF";
      return std::string{hex[tag >> 4], hex[tag & 0xF]};
    }());
  switch (static_cast<NodeKind>(tag)) {
    case NodeKind::Object: {
      uint32_t count = cur.u32();
      DataNode obj;
      for (uint32_t i = 0; i < count; ++i) {
        uint16_t name_len = cur.u16();
        auto name_bytes = cur.declared(name_len, 1, "child name");
        std::string name(name_bytes.begin(), name_bytes.end());
        DataNode value = read_node(cur);
        obj.child(name) = std::move(value);
      }
      return obj;
    }
    case NodeKind::Int64: {
      auto b = cur.fixed(8);
      return DataNode::int64(load_i64(b.data()));
    }
    case NodeKind::Float64: {
      auto b = cur.fixed(8);
      return DataNode::float64(load_f64(b.data()));
    }
    case NodeKind::String: {
      uint64_t len = cur.u64();
      auto b = cur.declared(len, 1, "string");
      return DataNode::string(std::string(b.begin(), b.end()));
    }
    case NodeKind::Int64Array: {
      uint64_t count = cur.u64();
      auto b = cur.declared(count, 8, "int64_array");
      std::vector<int64_t> v(count);
      for (uint64_t i = 0; i < count; ++i) v[i] = load_i64(b.data() + 8 * i);
      return DataNode::int64_array(std::move(v));
    }
    case NodeKind::Float64Array: {
      uint64_t count = cur.u64();
      auto b = cur.declared(count, 8, "float64_array");
      std::vector<double> v(count);
      for (uint64_t i = 0; i < count; ++i) v[i] = load_f64(b.data() + 8 * i);
      return DataNode::float64_array(std::move(v));
    }
    case NodeKind::Uint8Array: {
      uint64_t count = cur.u64();
      auto b = cur.declared(count, 1, "uint8_array");
      return DataNode::uint8_array(std::vector<uint8_t>(b.begin(), b.end()));
    }
  }
  fail(ErrorCode::DecodeUnknownTag, "unreachable");
}

} // namespace

DataNode deserialize_node(std::span<const uint8_t> bytes) {
  Cursor cur(bytes);
  DataNode root = read_node(cur);
  if (cur.remaining() != 0)
    fail(ErrorCode::DecodeTrailingBytes,
         std::to_string(cur.remaining()) + " trailing bytes after node at byte " +
             std::to_string(cur.position()));
  return root;
}

} // namespace hxit
