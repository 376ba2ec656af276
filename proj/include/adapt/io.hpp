#pragma once

// Binary containers (all integers and floats little-endian, independent of host):
//
//   ADPT  "ADPT" | u32 version=1 | u32 n_rows | u32 dim | u32 flags | f32[n_rows*dim] row-major
//         flags bit0: rows are already unit-norm
//   ADPL  "ADPL" | u32 version=1 | u32 n_rows | i32[n_rows]   (-1 = unlabeled)
//
// and a JSON manifest tying features, prototypes and labels together.
// Byte-level documentation lives in docs/FORMATS.md.

#include "adapt/core_types.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace adapt::io {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderBytes = 20;
inline constexpr std::size_t kLabelHeaderBytes = 12;
inline constexpr std::uint32_t kFlagPreNormalized = 1u;

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>((v >> (8 * b)) & 0xffu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingFile, path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::MissingFile, "cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::MissingFile, "write failed: " + path.string());
}

inline void expect_magic(const std::vector<unsigned char>& bytes, const char (&magic)[5],
                         const std::filesystem::path& path) {
    if (bytes.size() < 4) {
        throw Error(ErrorCode::TruncatedFile, path.string() + ": file ends at byte offset " +
                                                  std::to_string(bytes.size()) + " inside the magic");
    }
    if (std::memcmp(bytes.data(), magic, 4) != 0) {
        throw Error(ErrorCode::BadMagic, path.string() + ": expected " + magic);
    }
}

inline void expect_size(std::size_t actual, std::size_t expected, const std::filesystem::path& path) {
    if (actual < expected) {
        throw Error(ErrorCode::TruncatedFile, path.string() + ": expected " + std::to_string(expected) +
                                                  " bytes, file ends at byte offset " + std::to_string(actual));
    }
    if (actual > expected) {
        throw Error(ErrorCode::SizeMismatch, path.string() + ": declared size " + std::to_string(expected) +
                                                 " bytes but file has " + std::to_string(actual));
    }
}

} // namespace detail

inline std::string sha256_hex(std::span<const unsigned char> bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error(ErrorCode::DegenerateInput, "sha256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

/// Little-endian float32 payload for a matrix, exactly as stored in an ADPT file.
inline std::vector<unsigned char> float32_payload(const Matrix& data) {
    std::vector<unsigned char> out;
    out.reserve(static_cast<std::size_t>(data.size()) * 4);
    for (Index i = 0; i < data.rows(); ++i) {
        for (Index j = 0; j < data.cols(); ++j) {
            detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(data(i, j))));
        }
    }
    return out;
}

/// Provenance hash of a feature matrix: SHA-256 over its float32 payload.
inline std::string feature_hash(const Matrix& data) { return sha256_hex(float32_payload(data)); }

inline std::vector<unsigned char> encode_embeddings(const Matrix& data, std::uint32_t flags = 0) {
    std::vector<unsigned char> out{'A', 'D', 'P', 'T'};
    detail::put_u32(out, kFormatVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(data.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(data.cols()));
    detail::put_u32(out, flags);
    const auto payload = float32_payload(data);
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

inline void write_embeddings(const std::filesystem::path& path, const Matrix& data, std::uint32_t flags = 0) {
    detail::write_file(path, encode_embeddings(data, flags));
}

struct EmbeddingInfo {
    std::uint32_t flags = 0;
    std::string payload_sha256;
};

/// Decodes an ADPT image. Rows are L2-normalized unless flagged pre-normalized and already
/// within tolerance of unit norm.
inline Matrix decode_embeddings(const std::vector<unsigned char>& bytes, const std::filesystem::path& path,
                                EmbeddingInfo* info = nullptr, bool normalize = true) {
    detail::expect_magic(bytes, "ADPT", path);
    if (bytes.size() < kEmbeddingHeaderBytes) {
        throw Error(ErrorCode::TruncatedFile, path.string() + ": header incomplete, file ends at byte offset " +
                                                  std::to_string(bytes.size()));
    }
    const std::uint32_t version = detail::get_u32(bytes.data() + 4);
    if (version != kFormatVersion) {
        throw Error(ErrorCode::VersionMismatch, path.string() + ": version " + std::to_string(version));
    }
    const std::uint32_t rows = detail::get_u32(bytes.data() + 8);
    const std::uint32_t cols = detail::get_u32(bytes.data() + 12);
    const std::uint32_t flags = detail::get_u32(bytes.data() + 16);
    const std::size_t expected = kEmbeddingHeaderBytes + std::size_t{rows} * cols * 4;
    detail::expect_size(bytes.size(), expected, path);

    Matrix data(rows, cols);
    const unsigned char* p = bytes.data() + kEmbeddingHeaderBytes;
    for (std::uint32_t i = 0; i < rows; ++i) {
        for (std::uint32_t j = 0; j < cols; ++j, p += 4) {
            const float v = std::bit_cast<float>(detail::get_u32(p));
            if (!std::isfinite(v)) {
                throw Error(ErrorCode::NonFiniteValue,
                            path.string() + ": row " + std::to_string(i) + " col " + std::to_string(j));
            }
            data(i, j) = v;
        }
    }
    if (normalize) {
        const bool pre = (flags & kFlagPreNormalized) != 0;
        for (Index i = 0; i < data.rows(); ++i) {
            const double n = data.row(i).norm();
            if (n == 0.0) throw Error(ErrorCode::ZeroNormRow, path.string() + ": row " + std::to_string(i));
            if (pre && std::abs(n - 1.0) <= kUnitNormTolerance) continue;
            data.row(i) /= n;
        }
    }
    if (info) {
        info->flags = flags;
        info->payload_sha256 = sha256_hex(std::span(bytes).subspan(kEmbeddingHeaderBytes));
    }
    return data;
}

inline Matrix load_embeddings(const std::filesystem::path& path, EmbeddingInfo* info = nullptr,
                              bool normalize = true) {
    return decode_embeddings(detail::read_file(path), path, info, normalize);
}

inline void write_labels(const std::filesystem::path& path, std::span<const int> labels) {
    std::vector<unsigned char> out{'A', 'D', 'P', 'L'};
    detail::put_u32(out, kFormatVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(labels.size()));
    for (const int v : labels) detail::put_u32(out, static_cast<std::uint32_t>(v));
    detail::write_file(path, out);
}

inline std::vector<int> load_labels(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path);
    detail::expect_magic(bytes, "ADPL", path);
    if (bytes.size() < kLabelHeaderBytes) {
        throw Error(ErrorCode::TruncatedFile, path.string() + ": header incomplete, file ends at byte offset " +
                                                  std::to_string(bytes.size()));
    }
    const std::uint32_t version = detail::get_u32(bytes.data() + 4);
    if (version != kFormatVersion) {
        throw Error(ErrorCode::VersionMismatch, path.string() + ": version " + std::to_string(version));
    }
    const std::uint32_t n = detail::get_u32(bytes.data() + 8);
    detail::expect_size(bytes.size(), kLabelHeaderBytes + std::size_t{n} * 4, path);
    std::vector<int> labels(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        labels[i] = static_cast<int>(detail::get_u32(bytes.data() + kLabelHeaderBytes + 4 * std::size_t{i}));
    }
    return labels;
}

/// A validated dataset: features, prototypes and (possibly all -1) labels.
struct Dataset {
    Matrix features;
    PrototypeSet prototypes;
    std::vector<int> labels;
    std::optional<double> tau;
    std::string feature_hash;

    Index size() const noexcept { return features.rows(); }
    Index dim() const noexcept { return features.cols(); }
    Index num_classes() const noexcept { return prototypes.num_classes(); }

    static Dataset in_memory(Matrix features, PrototypeSet protos, std::vector<int> labels = {}) {
        if (features.cols() != protos.dim()) throw Error(ErrorCode::DimensionMismatch, "features vs prototypes");
        if (labels.empty()) labels.assign(static_cast<std::size_t>(features.rows()), -1);
        if (static_cast<Index>(labels.size()) != features.rows()) {
            throw Error(ErrorCode::DimensionMismatch, "labels vs features");
        }
        Dataset ds;
        ds.feature_hash = adapt::io::feature_hash(features);
        ds.features = std::move(features);
        ds.prototypes = std::move(protos);
        ds.labels = std::move(labels);
        return ds;
    }
};

struct ManifestFields {
    std::string features;
    std::string prototypes;
    std::optional<std::string> labels;
    std::vector<std::string> class_names;
    std::optional<double> tau;
};

inline void write_manifest(const std::filesystem::path& path, const ManifestFields& m) {
    nlohmann::json j{{"features", m.features}, {"prototypes", m.prototypes}};
    if (m.labels) j["labels"] = *m.labels;
    if (!m.class_names.empty()) j["class_names"] = m.class_names;
    if (m.tau) j["tau"] = *m.tau;
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::MissingFile, "cannot open for writing: " + path.string());
    out << j.dump(2) << '\n';
}

/// Loads and cross-checks a manifest. Relative paths resolve against the manifest's directory.
inline Dataset load_manifest(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFile, path.string());
    nlohmann::json j;
    try {
        std::ifstream in(path);
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::JsonError, path.string() + ": " + e.what());
    }
    const auto base = path.parent_path();
    auto resolve = [&](const char* key) -> std::filesystem::path {
        if (!j.contains(key) || !j[key].is_string()) {
            throw Error(ErrorCode::JsonError, path.string() + ": missing string field '" + key + "'");
        }
        std::filesystem::path p = j[key].get<std::string>();
        if (p.is_relative()) p = base / p;
        if (!std::filesystem::exists(p)) throw Error(ErrorCode::MissingFile, p.string());
        return p;
    };

    const auto features_path = resolve("features");
    const auto protos_path = resolve("prototypes");
    EmbeddingInfo info;
    Matrix X = load_embeddings(features_path, &info);
    Matrix P = load_embeddings(protos_path);
    if (X.cols() != P.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "prototypes " + protos_path.string() + " have d=" +
                                                      std::to_string(P.cols()) + " but features " +
                                                      features_path.string() + " have d=" + std::to_string(X.cols()));
    }
    std::vector<std::string> names;
    try {
        if (j.contains("class_names")) names = j["class_names"].get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::JsonError, path.string() + ": class_names: " + e.what());
    }

    Dataset ds;
    ds.prototypes = PrototypeSet::from_rows(std::move(P), std::move(names));
    if (j.contains("labels")) {
        const auto labels_path = resolve("labels");
        ds.labels = load_labels(labels_path);
        if (static_cast<Index>(ds.labels.size()) != X.rows()) {
            throw Error(ErrorCode::DimensionMismatch, "labels " + labels_path.string() + " have " +
                                                          std::to_string(ds.labels.size()) + " rows but features " +
                                                          features_path.string() + " have " +
                                                          std::to_string(X.rows()));
        }
        for (std::size_t i = 0; i < ds.labels.size(); ++i) {
            const int v = ds.labels[i];
            if (v < -1 || v >= ds.prototypes.num_classes()) {
                throw Error(ErrorCode::ClassIndexOutOfRange,
                            labels_path.string() + ": row " + std::to_string(i) + " has label " + std::to_string(v));
            }
        }
    } else {
        ds.labels.assign(static_cast<std::size_t>(X.rows()), -1);
    }
    if (j.contains("tau")) {
        if (!j["tau"].is_number()) throw Error(ErrorCode::JsonError, path.string() + ": tau must be a number");
        ds.tau = j["tau"].get<double>();
    }
    ds.features = std::move(X);
    ds.feature_hash = info.payload_sha256;
    return ds;
}

} // namespace adapt::io
