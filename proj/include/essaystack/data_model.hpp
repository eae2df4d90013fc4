#pragma once

#include <bit>
#include <cctype>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "essaystack/core.hpp"
#include "essaystack/csv.hpp"

namespace essaystack {

struct EssayRecord {
    std::string id;
    std::string full_text; // never missing: an empty cell is ""
    std::optional<ScoreVector> targets;
};

inline constexpr std::string_view kEssayHeader =
    "text_id,full_text,cohesion,syntax,vocabulary,phraseology,grammar,conventions";

/// Reads an essays CSV. With has_labels, the six score columns are required and
/// must lie on the half-point grid; without, score columns are ignored if present.
inline std::vector<EssayRecord> load_essays(const std::string& path, bool has_labels) {
    const auto rows = csv::parse_file(path);
    if (rows.empty()) throw ParseError(path + ": missing header");
    const auto& header = rows.front().fields;
    const std::size_t want_cols = has_labels ? 2 + kNumTargets : 2;
    if (header.size() < want_cols || header[0] != "text_id" || header[1] != "full_text")
        throw ParseError(path + ": line 1: expected header " + std::string(kEssayHeader));
    if (has_labels) {
        for (int t = 0; t < kNumTargets; ++t) {
            if (header[2 + t] != kTargetNames[t])
                throw ParseError(path + ": line 1: expected column '" + std::string(kTargetNames[t]) + "'");
        }
    }

    std::vector<EssayRecord> out;
    out.reserve(rows.size() - 1);
    std::set<std::string> seen;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const std::string where = path + ": line " + std::to_string(row.line);
        if (row.fields.size() != header.size())
            throw ParseError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                             std::to_string(row.fields.size()));
        EssayRecord rec;
        rec.id = row.fields[0];
        if (rec.id.empty()) throw ParseError(where + ": empty text_id");
        if (!seen.insert(rec.id).second) throw ValidationError(where + ": duplicate text_id '" + rec.id + "'");
        rec.full_text = row.fields[1];
        if (has_labels) {
            ScoreVector s{};
            for (int t = 0; t < kNumTargets; ++t) {
                const auto& cell = row.fields[2 + t];
                const std::string col(kTargetNames[t]);
                double v = 0.0;
                if (!csv::parse_double(cell, v))
                    throw ParseError(where + ": id '" + rec.id + "' column " + col + ": invalid number '" + cell + "'");
                if (!(v >= kScoreMin && v <= kScoreMax))
                    throw ValidationError(where + ": id '" + rec.id + "' column " + col + ": label out of range [1,5]");
                if (!is_on_grid(v))
                    throw ValidationError(where + ": id '" + rec.id + "' column " + col + ": off-grid label " + cell);
                s[t] = v;
            }
            rec.targets = s;
        }
        out.push_back(std::move(rec));
    }
    return out;
}

inline std::string format_essays(const std::vector<EssayRecord>& records) {
    std::string out(kEssayHeader);
    out += '\n';
    for (const auto& r : records) {
        out += csv::escape(r.id);
        out += ',';
        out += csv::escape(r.full_text);
        for (int t = 0; t < kNumTargets; ++t) {
            out += ',';
            if (r.targets) out += csv::format_double((*r.targets)[t]);
        }
        out += '\n';
    }
    return out;
}

inline void write_essays(const std::vector<EssayRecord>& records, const std::string& path) {
    csv::write_file(path, format_essays(records));
}

/// n x 6 matrix of gold scores. Every record must be labeled.
inline Matrix targets_matrix(const std::vector<EssayRecord>& records) {
    Matrix y(static_cast<Eigen::Index>(records.size()), kNumTargets);
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!records[i].targets) throw ValidationError("record '" + records[i].id + "' has no labels");
        for (int t = 0; t < kNumTargets; ++t) y(static_cast<Eigen::Index>(i), t) = (*records[i].targets)[t];
    }
    return y;
}

// ---------------------------------------------------------------------------
// Embedding groups and the EMB1 binary format:
//   "EMB1" | u32 rows (LE) | u32 cols (LE) | rows*cols binary32 (LE, row-major)
// ---------------------------------------------------------------------------
using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// (model_id, layer_index); layer 0 is the last transformer layer.
using GroupKey = std::pair<std::string, int>;

inline std::string to_string(const GroupKey& k) { return k.first + "@" + std::to_string(k.second); }

struct FeatureGroup {
    std::string model_id;
    int layer_index = 0;
    FloatMatrix matrix; // rows aligned with the dataset's record order

    GroupKey key() const { return {model_id, layer_index}; }
};

class EmbeddingError : public Error {
public:
    enum class Kind { io, magic, truncated, dimension, non_finite, empty };
    EmbeddingError(Kind k, const std::string& what) : Error("embedding", what), kind_(k) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

namespace detail {
inline void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
} // namespace detail

inline FloatMatrix read_emb1(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw EmbeddingError(EmbeddingError::Kind::io, "cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12) throw EmbeddingError(EmbeddingError::Kind::truncated, path + ": header truncated");
    if (!(bytes[0] == 'E' && bytes[1] == 'M' && bytes[2] == 'B' && bytes[3] == '1'))
        throw EmbeddingError(EmbeddingError::Kind::magic, path + ": bad magic, expected EMB1");
    const std::uint32_t rows = detail::get_u32(bytes.data() + 4);
    const std::uint32_t cols = detail::get_u32(bytes.data() + 8);
    const std::uint64_t payload = static_cast<std::uint64_t>(rows) * cols * 4;
    if (bytes.size() - 12 != payload)
        throw EmbeddingError(EmbeddingError::Kind::truncated,
                             path + ": payload is " + std::to_string(bytes.size() - 12) + " bytes, header implies " +
                                 std::to_string(payload));
    FloatMatrix m(rows, cols);
    const unsigned char* p = bytes.data() + 12;
    for (std::uint32_t r = 0; r < rows; ++r) {
        for (std::uint32_t c = 0; c < cols; ++c, p += 4) {
            const float v = std::bit_cast<float>(detail::get_u32(p));
            if (!std::isfinite(v))
                throw EmbeddingError(EmbeddingError::Kind::non_finite,
                                     path + ": non-finite value at row " + std::to_string(r) + ", col " +
                                         std::to_string(c));
            m(r, c) = v;
        }
    }
    return m;
}

inline void write_emb1(const FloatMatrix& m, const std::string& path) {
    if (m.rows() < 1 || m.cols() < 1)
        throw EmbeddingError(EmbeddingError::Kind::empty, path + ": matrix must have at least one row and column");
    std::string buf = "EMB1";
    buf.reserve(12 + static_cast<std::size_t>(m.size()) * 4);
    detail::put_u32(buf, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(buf, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (!std::isfinite(m(r, c)))
                throw EmbeddingError(EmbeddingError::Kind::non_finite, path + ": refusing to write non-finite value");
            detail::put_u32(buf, std::bit_cast<std::uint32_t>(m(r, c)));
        }
    }
    try {
        csv::write_file(path, buf);
    } catch (const IoError& e) {
        throw EmbeddingError(EmbeddingError::Kind::io, e.what());
    }
}

struct ManifestEntry {
    std::string model_id;
    int layer_index = 0;
    std::string path; // resolved against the manifest's directory on load
};

inline std::vector<ManifestEntry> load_manifest(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(csv::read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (!j.is_array()) throw ParseError(path + ": manifest must be a JSON array");
    const auto base = std::filesystem::path(path).parent_path();
    std::vector<ManifestEntry> out;
    std::set<GroupKey> seen;
    for (const auto& e : j) {
        if (!e.is_object() || !e.contains("model_id") || !e.contains("layer_index") || !e.contains("path"))
            throw ParseError(path + ": each entry needs model_id, layer_index, path");
        ManifestEntry m;
        m.model_id = e.at("model_id").get<std::string>();
        m.layer_index = e.at("layer_index").get<int>();
        if (m.layer_index < 0) throw ValidationError(path + ": negative layer_index for " + m.model_id);
        const std::filesystem::path p = e.at("path").get<std::string>();
        m.path = p.is_absolute() ? p.string() : (base / p).lexically_normal().string();
        if (!seen.insert({m.model_id, m.layer_index}).second)
            throw ValidationError(path + ": duplicate entry " + to_string({m.model_id, m.layer_index}));
        out.push_back(std::move(m));
    }
    return out;
}

inline void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : entries)
        j.push_back({{"model_id", e.model_id}, {"layer_index", e.layer_index}, {"path", e.path}});
    csv::write_file(path, j.dump(2) + "\n");
}

inline FeatureGroup load_feature_group(const ManifestEntry& entry, std::size_t expected_rows) {
    FeatureGroup g;
    g.model_id = entry.model_id;
    g.layer_index = entry.layer_index;
    g.matrix = read_emb1(entry.path);
    if (static_cast<std::size_t>(g.matrix.rows()) != expected_rows)
        throw EmbeddingError(EmbeddingError::Kind::dimension,
                             entry.path + ": has " + std::to_string(g.matrix.rows()) + " rows, dataset has " +
                                 std::to_string(expected_rows));
    return g;
}

inline void write_feature_group(const FeatureGroup& group, const std::string& path) { write_emb1(group.matrix, path); }

struct Dataset {
    std::vector<EssayRecord> records;
    std::map<GroupKey, FeatureGroup> groups;

    std::size_t size() const { return records.size(); }
    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        out.reserve(records.size());
        for (const auto& r : records) out.push_back(r.id);
        return out;
    }
    std::vector<GroupKey> group_keys() const {
        std::vector<GroupKey> out;
        for (const auto& [k, _] : groups) out.push_back(k);
        return out;
    }
    const FeatureGroup& group(const GroupKey& k) const {
        auto it = groups.find(k);
        if (it == groups.end()) throw ValidationError("unknown feature group " + to_string(k));
        return it->second;
    }
};

inline Dataset load_dataset(const std::string& essays_path, const std::string& manifest_path, bool has_labels) {
    Dataset ds;
    ds.records = load_essays(essays_path, has_labels);
    for (const auto& entry : load_manifest(manifest_path)) {
        auto g = load_feature_group(entry, ds.records.size());
        ds.groups.emplace(g.key(), std::move(g));
    }
    return ds;
}

/// Horizontal concatenation of the given groups, in the given order.
inline Matrix concat_groups(const Dataset& ds, const std::vector<GroupKey>& keys) {
    Eigen::Index cols = 0;
    for (const auto& k : keys) cols += ds.group(k).matrix.cols();
    Matrix x(static_cast<Eigen::Index>(ds.size()), cols);
    Eigen::Index at = 0;
    for (const auto& k : keys) {
        const auto& m = ds.group(k).matrix;
        x.middleCols(at, m.cols()) = m.cast<double>();
        at += m.cols();
    }
    return x;
}

// ---------------------------------------------------------------------------
// Synthetic data. Scores are grid-snapped affine functions of a hidden latent
// vector; every feature group is a random projection of that latent plus
// group-specific Gaussian noise whose scale grows with the group index.
// ---------------------------------------------------------------------------
struct SynthOptions {
    int latent_dim = 4;
    double score_scale = 0.6;
    bool row_hash_column = false; // last column of every group encodes the row's id
};

inline constexpr int kSynthLayers = 4;

/// Value stored in the row-hash column for a record id; exactly representable in float.
inline float row_hash_value(std::string_view id) {
    const auto h = fnv1a64(id) & 0xFFFFFFULL;
    return static_cast<float>(static_cast<double>(h) / 8388608.0 - 1.0);
}

/// True when every group's hash column (if synthesized with one) matches record order.
inline bool verify_row_alignment(const Dataset& ds) {
    for (const auto& [k, g] : ds.groups) {
        const auto last = g.matrix.cols() - 1;
        for (std::size_t i = 0; i < ds.size(); ++i)
            if (g.matrix(static_cast<Eigen::Index>(i), last) != row_hash_value(ds.records[i].id)) return false;
    }
    return true;
}

namespace detail {
inline std::string synth_text(std::mt19937_64& rng, const Vector& z) {
    static const std::vector<std::string> short_words = {"the", "a", "school", "is", "good", "we", "they", "work",
                                                         "time", "more", "help", "think", "can", "day", "learn"};
    static const std::vector<std::string> mid_words = {"students", "teacher", "because", "people", "better", "open",
                                                       "future", "also", "maybe", "problem", "classes", "many"};
    static const std::vector<std::string> long_words = {"important", "education", "opportunity", "community",
                                                        "everyone", "experience", "responsible", "different",
                                                        "technology", "especially", "activities"};
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double p_long = 1.0 / (1.0 + std::exp(-z(0)));
    const double mean_len = 9.0 + 3.0 * (z.size() > 1 ? z(1) : 0.0);
    const int sentences = 3 + static_cast<int>(rng() % 5);
    std::string text;
    for (int s = 0; s < sentences; ++s) {
        const int len = std::clamp(static_cast<int>(std::lround(mean_len + 2.0 * gauss(rng))), 3, 25);
        for (int w = 0; w < len; ++w) {
            const double u = unif(rng);
            const auto& pool = u < 0.35 * p_long ? long_words : (u < 0.35 * p_long + 0.3 ? mid_words : short_words);
            std::string word = pool[rng() % pool.size()];
            if (w == 0) word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
            if (!text.empty()) text += ' ';
            text += word;
        }
        const auto end = rng() % 10;
        text += end == 0 ? "!" : (end == 1 ? "?" : ".");
    }
    return text;
}
} // namespace detail

/// Deterministic in seed. Requires n >= 10; with d >= latent_dim and noise = 0 the
/// pre-snap scores are exactly linear in every group.
inline Dataset synthesize_dataset(std::uint64_t seed, std::size_t n, int d, int num_groups, double noise,
                                  const SynthOptions& opt = {}) {
    if (n < 10) throw ValidationError("synthesize_dataset: n must be >= 10");
    if (d < 1 || num_groups < 1) throw ValidationError("synthesize_dataset: d and num_groups must be >= 1");
    if (!(noise >= 0.0)) throw ValidationError("synthesize_dataset: noise must be >= 0");
    const int L = opt.latent_dim;
    std::mt19937_64 rng(derive_seed(seed, "synth"));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(-0.2, 0.2);

    // Correlated score loadings: common direction plus a target-specific one.
    Vector common(L);
    for (int l = 0; l < L; ++l) common(l) = gauss(rng);
    common.normalize();
    Matrix loadings(kNumTargets, L);
    Vector offsets(kNumTargets);
    for (int t = 0; t < kNumTargets; ++t) {
        Vector own(L);
        for (int l = 0; l < L; ++l) own(l) = gauss(rng);
        own.normalize();
        loadings.row(t) = (0.8 * common + 0.6 * own).normalized().transpose();
        offsets(t) = unif(rng);
    }

    std::vector<Matrix> projections;
    for (int g = 0; g < num_groups; ++g) {
        Matrix p(d, L);
        for (int r = 0; r < d; ++r)
            for (int l = 0; l < L; ++l) p(r, l) = gauss(rng) / std::sqrt(static_cast<double>(L));
        projections.push_back(std::move(p));
    }

    Dataset ds;
    Matrix latent(static_cast<Eigen::Index>(n), L);
    for (std::size_t i = 0; i < n; ++i) {
        Vector z(L);
        for (int l = 0; l < L; ++l) z(l) = gauss(rng);
        latent.row(static_cast<Eigen::Index>(i)) = z.transpose();
        EssayRecord rec;
        char id[32];
        std::snprintf(id, sizeof(id), "e%05zu", i);
        rec.id = id;
        rec.full_text = detail::synth_text(rng, z);
        ScoreVector s{};
        for (int t = 0; t < kNumTargets; ++t) {
            const double raw = 3.0 + offsets(t) + opt.score_scale * loadings.row(t).dot(z.transpose());
            s[t] = std::floor(clamp_score(raw) * 2.0 + 0.5) / 2.0;
        }
        rec.targets = s;
        ds.records.push_back(std::move(rec));
    }

    for (int g = 0; g < num_groups; ++g) {
        FeatureGroup fg;
        fg.model_id = "m" + std::to_string(g / kSynthLayers);
        fg.layer_index = g % kSynthLayers;
        const double sigma = noise * (1.0 + 0.5 * g);
        fg.matrix.resize(static_cast<Eigen::Index>(n), d);
        for (std::size_t i = 0; i < n; ++i) {
            const Vector clean = projections[static_cast<std::size_t>(g)] * latent.row(static_cast<Eigen::Index>(i)).transpose();
            for (int c = 0; c < d; ++c)
                fg.matrix(static_cast<Eigen::Index>(i), c) = static_cast<float>(clean(c) + sigma * gauss(rng));
        }
        if (opt.row_hash_column)
            for (std::size_t i = 0; i < n; ++i)
                fg.matrix(static_cast<Eigen::Index>(i), d - 1) = row_hash_value(ds.records[i].id);
        ds.groups.emplace(fg.key(), std::move(fg));
    }
    return ds;
}

/// Writes essays.csv, one EMB1 file per group and manifest.json into dir.
inline void write_dataset(const Dataset& ds, const std::string& dir, bool with_labels = true) {
    std::filesystem::create_directories(dir);
    std::vector<EssayRecord> records = ds.records;
    if (!with_labels)
        for (auto& r : records) r.targets.reset();
    write_essays(records, (std::filesystem::path(dir) / "essays.csv").string());
    std::vector<ManifestEntry> entries;
    for (const auto& [k, g] : ds.groups) {
        const std::string file = g.model_id + "_layer" + std::to_string(g.layer_index) + ".emb";
        write_feature_group(g, (std::filesystem::path(dir) / file).string());
        entries.push_back({g.model_id, g.layer_index, file});
    }
    write_manifest(entries, (std::filesystem::path(dir) / "manifest.json").string());
}

/// Rows [begin, end) of a dataset, groups sliced accordingly.
inline Dataset slice_dataset(const Dataset& ds, std::size_t begin, std::size_t end) {
    Dataset out;
    out.records.assign(ds.records.begin() + static_cast<std::ptrdiff_t>(begin),
                       ds.records.begin() + static_cast<std::ptrdiff_t>(end));
    for (const auto& [k, g] : ds.groups) {
        FeatureGroup fg = g;
        fg.matrix = g.matrix.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
        out.groups.emplace(k, std::move(fg));
    }
    return out;
}

} // namespace essaystack
