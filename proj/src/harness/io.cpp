#include "cobwebtm/harness/io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include <json.hpp>
#include <openssl/evp.h>

#include "cobwebtm/error.hpp"

namespace cobwebtm {

namespace {

constexpr std::array<char, 4> kMagic = {'C', 'B', 'W', '1'};
constexpr std::size_t kHeaderBytes = 16;

template <typename T>
T load_le(const unsigned char* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

template <typename T>
void store_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw ValidationError("failed reading " + path.string());
  return bytes;
}

void write_atomically(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::optional<std::string> optional_string(const nlohmann::json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    throw ValidationError("line " + std::to_string(line) + ": \"" + key + "\" must be a string");
  }
  return it->get<std::string>();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

}  // namespace

std::span<const float> EmbeddingMatrix::row(std::uint64_t i) const {
  if (i >= rows) throw ValidationError("embedding row " + std::to_string(i) + " out of range");
  return std::span<const float>(values).subspan(static_cast<std::size_t>(i) * dim, dim);
}

EmbeddingMatrix read_cbw1(const std::filesystem::path& path) {
  const std::string bytes = slurp(path);
  if (bytes.size() < kHeaderBytes || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw ValidationError(path.string() + ": not a CBW1 embedding file");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  EmbeddingMatrix m;
  m.dim = load_le<std::uint32_t>(p + 4);
  m.rows = load_le<std::uint64_t>(p + 8);
  if (m.dim == 0) throw ValidationError(path.string() + ": dimensionality is zero");
  const std::uint64_t payload = bytes.size() - kHeaderBytes;
  if (m.rows > payload / 4 / m.dim || payload != m.rows * m.dim * 4) {
    throw ValidationError(path.string() + ": header declares " + std::to_string(m.rows) + " rows of dimension " +
                          std::to_string(m.dim) + " but payload is " + std::to_string(payload) + " bytes");
  }
  m.values.resize(static_cast<std::size_t>(m.rows) * m.dim);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    m.values[i] = std::bit_cast<float>(load_le<std::uint32_t>(p + kHeaderBytes + 4 * i));
  }
  return m;
}

void write_cbw1(const std::filesystem::path& path, const EmbeddingMatrix& m) {
  if (m.values.size() != static_cast<std::size_t>(m.rows) * m.dim) {
    throw ValidationError("embedding matrix size does not match its shape");
  }
  std::string bytes(kMagic.begin(), kMagic.end());
  bytes.reserve(kHeaderBytes + 4 * m.values.size());
  store_le(bytes, m.dim);
  store_le(bytes, m.rows);
  for (float v : m.values) store_le(bytes, std::bit_cast<std::uint32_t>(v));
  write_atomically(path, bytes);
}

std::vector<DocumentLine> read_docs_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<DocumentLine> docs;
  std::unordered_set<DocId> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + " line " + std::to_string(line) + ": " + e.what());
    }
    if (!obj.is_object()) throw ValidationError("line " + std::to_string(line) + ": expected a JSON object");
    DocumentLine doc;
    auto id = obj.find("id");
    if (id == obj.end() || !id->is_string()) {
      throw ValidationError("line " + std::to_string(line) + ": \"id\" must be a string");
    }
    doc.id = id->get<std::string>();
    auto tokens = obj.find("tokens");
    if (tokens == obj.end() || !tokens->is_array()) {
      throw ValidationError("line " + std::to_string(line) + ": \"tokens\" must be an array");
    }
    for (const auto& t : *tokens) {
      if (!t.is_string()) throw ValidationError("line " + std::to_string(line) + ": tokens must be strings");
      doc.tokens.push_back(t.get<std::string>());
    }
    doc.label = optional_string(obj, "label", line);
    doc.timestamp = optional_string(obj, "timestamp", line);
    if (!seen.insert(doc.id).second) {
      throw ValidationError("line " + std::to_string(line) + ": duplicate document id " + doc.id);
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

void write_docs_jsonl(const std::filesystem::path& path, const std::vector<DocumentLine>& docs) {
  std::string out;
  for (const auto& d : docs) {
    nlohmann::json obj = {{"id", d.id}, {"tokens", d.tokens}};
    if (d.label) obj["label"] = *d.label;
    if (d.timestamp) obj["timestamp"] = *d.timestamp;
    out += obj.dump();
    out += '\n';
  }
  write_atomically(path, out);
}

std::vector<std::string> read_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<std::string> words;
  std::string w;
  std::size_t line = 0;
  while (std::getline(in, w)) {
    ++line;
    if (!w.empty() && w.back() == '\r') w.pop_back();
    if (w.empty()) throw ValidationError(path.string() + " line " + std::to_string(line) + ": empty word");
    words.push_back(w);
  }
  return words;
}

void write_vocabulary(const std::filesystem::path& path, const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (w.empty() || w.find('\n') != std::string::npos) throw ValidationError("vocabulary words must be non-empty lines");
    out += w;
    out += '\n';
  }
  write_atomically(path, out);
}

WordVectorTable read_word_vectors(const std::filesystem::path& vectors, const std::filesystem::path& vocabulary) {
  const EmbeddingMatrix m = read_cbw1(vectors);
  std::vector<std::string> words = read_vocabulary(vocabulary);
  if (words.size() != m.rows) {
    throw ValidationError("vocabulary has " + std::to_string(words.size()) + " words but the vector table has " +
                          std::to_string(m.rows) + " rows");
  }
  return WordVectorTable(std::move(words), m.dim, std::vector<double>(m.values.begin(), m.values.end()));
}

std::vector<DocumentRecord> pair_stream(std::vector<DocumentLine> docs, const EmbeddingMatrix& embeddings) {
  if (docs.size() != embeddings.rows) {
    throw ValidationError("document file has " + std::to_string(docs.size()) + " records but the embedding file has " +
                          std::to_string(embeddings.rows) + " rows");
  }
  std::vector<DocumentRecord> out;
  out.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    DocumentRecord r;
    r.id = std::move(docs[i].id);
    r.tokens = std::move(docs[i].tokens);
    r.label = std::move(docs[i].label);
    r.timestamp = std::move(docs[i].timestamp);
    r.arrival_index = i;
    const auto row = embeddings.row(i);
    r.embedding.assign(row.begin(), row.end());
    for (double v : r.embedding) {
      if (!std::isfinite(v)) throw ValidationError("embedding row " + std::to_string(i) + " has a non-finite value");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string stream_checksum(const std::vector<DocumentLine>& docs, const EmbeddingMatrix& embeddings) {
  if (docs.size() != embeddings.rows) {
    throw ValidationError("checksum needs one document per embedding row");
  }
  std::string lines;
  std::string row;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    row.clear();
    for (float v : embeddings.row(i)) store_le(row, std::bit_cast<std::uint32_t>(v));
    lines += docs[i].id;
    lines += '\t';
    lines += sha256_hex(row);
    lines += '\n';
  }
  return sha256_hex(lines);
}

EmbeddingManifest make_manifest(std::string model, const std::vector<DocumentLine>& docs,
                                const EmbeddingMatrix& embeddings) {
  return EmbeddingManifest{std::move(model), embeddings.dim, embeddings.rows, stream_checksum(docs, embeddings)};
}

EmbeddingManifest read_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(slurp(path));
    EmbeddingManifest m;
    m.model = j.at("model").get<std::string>();
    m.dim = j.at("D").get<std::uint32_t>();
    m.count = j.at("count").get<std::uint64_t>();
    m.checksum = j.at("checksum").get<std::string>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": malformed manifest: " + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const EmbeddingManifest& m) {
  const nlohmann::json j = {{"model", m.model}, {"D", m.dim}, {"count", m.count}, {"checksum", m.checksum}};
  write_atomically(path, j.dump(2) + "\n");
}

void verify_manifest(const EmbeddingManifest& manifest, const std::vector<DocumentLine>& docs,
                     const EmbeddingMatrix& embeddings) {
  if (manifest.dim != embeddings.dim) {
    throw ValidationError("manifest declares D=" + std::to_string(manifest.dim) + " but the embedding file has D=" +
                          std::to_string(embeddings.dim));
  }
  if (manifest.count != embeddings.rows || manifest.count != docs.size()) {
    throw ValidationError("manifest declares " + std::to_string(manifest.count) + " rows but found " +
                          std::to_string(embeddings.rows) + " embeddings and " + std::to_string(docs.size()) +
                          " documents");
  }
  if (stream_checksum(docs, embeddings) != manifest.checksum) {
    throw ValidationError("manifest checksum does not match the documents and embeddings");
  }
}

std::vector<DocumentRecord> load_stream(const std::filesystem::path& docs, const std::filesystem::path& embeddings,
                                        const std::optional<std::filesystem::path>& manifest) {
  std::vector<DocumentLine> lines = read_docs_jsonl(docs);
  const EmbeddingMatrix m = read_cbw1(embeddings);
  if (manifest) verify_manifest(read_manifest(*manifest), lines, m);
  return pair_stream(std::move(lines), m);
}

}  // namespace cobwebtm
