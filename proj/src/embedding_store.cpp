#include "capeval/embedding_store.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "capeval/error.hpp"

namespace capeval {

EmbeddingStore::EmbeddingStore(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw CorruptionError("embedding store dimension must be positive");
}

void EmbeddingStore::add(std::string id, Eigen::VectorXf vector, Modality modality) {
  if (static_cast<std::size_t>(vector.size()) != dimension_) {
    throw DataError("record '" + id + "' has dimension " + std::to_string(vector.size()) +
                    ", store expects " + std::to_string(dimension_));
  }
  if (index_.contains(id)) throw DataError("duplicate embedding id '" + id + "'");
  index_.emplace(id, records_.size());
  records_.push_back(EmbeddingRecord{std::move(id), std::move(vector), modality});
}

void EmbeddingStore::add_normalized(std::string id,
                                    const Eigen::Ref<const Eigen::VectorXf>& vector,
                                    Modality modality) {
  Eigen::VectorXf unit = normalize_embedding(vector, id);
  add(std::move(id), std::move(unit), modality);
}

const EmbeddingRecord* EmbeddingStore::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &records_[it->second];
}

const EmbeddingRecord& EmbeddingStore::at(std::string_view id) const {
  const EmbeddingRecord* record = find(id);
  if (record == nullptr) throw DataError("unknown embedding id '" + std::string(id) + "'");
  return *record;
}

bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
  if (a.dimension_ != b.dimension_ || a.records_.size() != b.records_.size()) return false;
  for (std::size_t i = 0; i < a.records_.size(); ++i) {
    const auto& ra = a.records_[i];
    const auto& rb = b.records_[i];
    if (ra.id != rb.id || ra.modality != rb.modality) return false;
    if (std::memcmp(ra.vector.data(), rb.vector.data(), sizeof(float) * a.dimension_) != 0) {
      return false;
    }
  }
  return true;
}

Eigen::VectorXf normalize_embedding(const Eigen::Ref<const Eigen::VectorXf>& v,
                                    std::string_view id) {
  const double norm = v.cast<double>().norm();
  if (!std::isfinite(norm)) {
    throw DataError("embedding '" + std::string(id) + "' has non-finite components");
  }
  if (norm == 0.0) throw DataError("embedding '" + std::string(id) + "' has zero norm");
  if (std::abs(norm - 1.0) <= kUnitNormTolerance) return v;
  return (v.cast<double>() / norm).cast<float>();
}

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in, const std::string& source, const char* what) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw CorruptionError(source + ": truncated while reading " + what);
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

EmbeddingStore read_store(std::istream& in, const std::string& source) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 8 || std::string_view(magic.data(), 8) != kStoreMagic) {
    throw FormatError(source + ": bad magic, expected CAPEVEC1");
  }
  const auto version = get_le<std::uint32_t>(in, source, "version");
  if (version != kStoreVersion) {
    throw FormatError(source + ": unsupported store version " + std::to_string(version));
  }
  const auto dim = get_le<std::uint32_t>(in, source, "dimension");
  if (dim == 0) throw CorruptionError(source + ": dimension is 0");
  const auto count = get_le<std::uint64_t>(in, source, "record count");

  EmbeddingStore store(dim);
  Eigen::VectorXf raw(dim);
  for (std::uint64_t k = 0; k < count; ++k) {
    if (in.peek() == std::char_traits<char>::eof()) {
      throw CorruptionError(source + ": header declares " + std::to_string(count) +
                            " records but only " + std::to_string(k) + " present");
    }
    const auto id_len = get_le<std::uint32_t>(in, source, "id length");
    std::string id(id_len, '\0');
    in.read(id.data(), id_len);
    if (in.gcount() != static_cast<std::streamsize>(id_len)) {
      throw CorruptionError(source + ": truncated id in record " + std::to_string(k));
    }
    const auto modality = get_le<std::uint8_t>(in, source, "modality");
    if (modality > 1) {
      throw CorruptionError(source + ": record '" + id + "' has invalid modality " +
                            std::to_string(modality));
    }
    for (std::uint32_t j = 0; j < dim; ++j) {
      raw[j] = std::bit_cast<float>(get_le<std::uint32_t>(in, source, "vector"));
    }
    store.add_normalized(std::move(id), raw, static_cast<Modality>(modality));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CorruptionError(source + ": trailing bytes after " + std::to_string(count) +
                          " declared records");
  }
  return store;
}

void write_store(const EmbeddingStore& store, std::ostream& out) {
  if (store.empty()) throw UsageError("refusing to save an empty embedding store");
  out.write(kStoreMagic.data(), kStoreMagic.size());
  put_le<std::uint32_t>(out, kStoreVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.dimension()));
  put_le<std::uint64_t>(out, store.size());
  for (const auto& record : store) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(record.id.size()));
    out.write(record.id.data(), static_cast<std::streamsize>(record.id.size()));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(record.modality));
    for (Eigen::Index j = 0; j < record.vector.size(); ++j) {
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(record.vector[j]));
    }
  }
}

EmbeddingStore load_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": file not found or unreadable");
  return read_store(in, path.string());
}

void save_store(const EmbeddingStore& store, const std::filesystem::path& path) {
  if (store.empty()) throw UsageError("refusing to save an empty embedding store");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  write_store(store, out);
  out.flush();
  if (!out) throw IoError(path.string() + ": write failed");
}

}  // namespace capeval
