#pragma once

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "t2v/geometry.hpp"
#include "t2v/raster.hpp"
#include "t2v/svg_io.hpp"
#include "t2v/util.hpp"

namespace t2v::data {

using geom::BezierPath;
using geom::Vec2;

enum class Split : uint8_t { train = 0, val = 1 };

struct PathRecord {
    BezierPath path;           // normalized to [0.05, 0.95]^2
    std::vector<float> image;  // 64x64 grayscale, white background, dark shape
    Split split = Split::train;
};

struct DatasetStats {
    int64_t files_parsed = 0;
    int64_t files_failed = 0;
    int64_t paths_seen = 0;
    int64_t filtered_long = 0;
    int64_t filtered_degenerate = 0;
    int64_t duplicates_removed = 0;
};

struct PathDataset {
    int k_max = BezierPath::kMaxPoints;
    int image_size = 64;
    uint64_t seed = 0;
    std::vector<PathRecord> records;
    DatasetStats stats;

    int64_t count(Split s) const {
        int64_t c = 0;
        for (const auto& r : records) c += (r.split == s) ? 1 : 0;
        return c;
    }
};

// ---------------------------------------------------------------------------
// Normalization: isotropic bounding-box fit into [0.05, 0.95]^2.
// ---------------------------------------------------------------------------
inline constexpr double kNormalizedMargin = 0.05;

inline bool normalize_path(BezierPath& path) {
    Vec2 lo = path.points[0], hi = path.points[0];
    for (const Vec2& p : path.points) {
        lo.x = std::min(lo.x, p.x);
        lo.y = std::min(lo.y, p.y);
        hi.x = std::max(hi.x, p.x);
        hi.y = std::max(hi.y, p.y);
    }
    double extent = std::max(hi.x - lo.x, hi.y - lo.y);
    if (extent < 1e-12) return false;
    double scale = (1.0 - 2.0 * kNormalizedMargin) / extent;
    Vec2 center{(lo.x + hi.x) * 0.5, (lo.y + hi.y) * 0.5};
    for (Vec2& p : path.points) {
        p.x = std::clamp((p.x - center.x) * scale + 0.5, 0.0, 1.0);
        p.y = std::clamp((p.y - center.y) * scale + 0.5, 0.0, 1.0);
    }
    return true;
}

// ---------------------------------------------------------------------------
// Duplicate detection: points quantized to a 256 grid; closed paths are
// canonicalized over start-point rotation before hashing.
// ---------------------------------------------------------------------------
inline uint64_t content_key(const BezierPath& path) {
    int len = path.length();
    std::vector<uint8_t> q(static_cast<size_t>(len) * 2);
    for (int i = 0; i < len; ++i) {
        q[2 * i] = static_cast<uint8_t>(std::lround(std::clamp(path.points[i].x, 0.0, 1.0) * 255.0));
        q[2 * i + 1] = static_cast<uint8_t>(std::lround(std::clamp(path.points[i].y, 0.0, 1.0) * 255.0));
    }
    if (path.closed) {
        // choose the lexicographically smallest rotation over segment starts
        std::vector<uint8_t> best = q;
        std::vector<uint8_t> rot(q.size());
        for (int start = 3; start < len; start += 3) {
            size_t off = static_cast<size_t>(start) * 2;
            std::copy(q.begin() + off, q.end(), rot.begin());
            std::copy(q.begin(), q.begin() + off, rot.end() - off);
            if (rot < best) best = rot;
        }
        q = best;
    }
    uint64_t h = fnv1a(q.data(), q.size());
    h = fnv1a(&len, sizeof(len), h);
    uint8_t closed = path.closed ? 1 : 0;
    return fnv1a(&closed, 1, h);
}

// ---------------------------------------------------------------------------
// build_dataset
// ---------------------------------------------------------------------------
struct BuildOptions {
    int k_max = BezierPath::kMaxPoints;
    int image_size = 64;
    uint64_t seed = 0;
    double val_fraction = 0.1;
};

inline PathDataset build_dataset_from_documents(const std::vector<svg::SvgDocument>& docs,
                                                const BuildOptions& opt, DatasetStats stats = {}) {
    PathDataset ds;
    ds.k_max = opt.k_max;
    ds.image_size = opt.image_size;
    ds.seed = opt.seed;
    ds.stats = stats;

    std::map<uint64_t, BezierPath> unique;  // ordered: canonical by content hash
    for (const svg::SvgDocument& doc : docs) {
        for (const svg::SvgEntry& entry : doc.entries) {
            ++ds.stats.paths_seen;
            if (entry.path.length() > opt.k_max) {
                ++ds.stats.filtered_long;
                continue;
            }
            if (entry.path.length() < 4 || !entry.path.is_valid()) {
                ++ds.stats.filtered_degenerate;
                continue;
            }
            BezierPath norm = entry.path;
            if (!normalize_path(norm)) {
                ++ds.stats.filtered_degenerate;
                continue;
            }
            uint64_t key = content_key(norm);
            if (unique.contains(key)) {
                ++ds.stats.duplicates_removed;
                continue;
            }
            unique.emplace(key, std::move(norm));
        }
    }

    ds.records.reserve(unique.size());
    for (auto& [key, path] : unique) {
        PathRecord rec;
        rec.image = raster::rasterize_shape_gray(path, opt.image_size);
        rec.path = std::move(path);
        ds.records.push_back(std::move(rec));
    }

    // one stored-seed shuffle; order is independent of corpus file order
    // because records arrive sorted by content hash
    Rng rng(opt.seed, 0x5eed);
    for (size_t i = ds.records.size(); i > 1; --i) {
        size_t j = rng.uniform_index(static_cast<uint32_t>(i));
        std::swap(ds.records[i - 1], ds.records[j]);
    }
    size_t val_count = static_cast<size_t>(ds.records.size() * opt.val_fraction);
    if (!ds.records.empty() && val_count == 0) val_count = std::min<size_t>(1, ds.records.size() - 1);
    for (size_t i = 0; i < ds.records.size(); ++i)
        ds.records[i].split = (i + val_count >= ds.records.size()) ? Split::val : Split::train;

    if (ds.records.empty()) throw DatasetError("dataset is empty after filtering");
    return ds;
}

inline PathDataset build_dataset(const std::filesystem::path& corpus_dir, const BuildOptions& opt = {}) {
    if (!std::filesystem::is_directory(corpus_dir))
        throw DatasetError("corpus directory not found: " + corpus_dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(corpus_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".svg") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DatasetError("no .svg files in corpus: " + corpus_dir.string());

    DatasetStats stats;
    std::vector<svg::SvgDocument> docs;
    docs.reserve(files.size());
    for (const auto& f : files) {
        try {
            docs.push_back(svg::parse_svg(read_text_file(f)));
            ++stats.files_parsed;
        } catch (const ParseError&) {
            ++stats.files_failed;
        }
    }
    return build_dataset_from_documents(docs, opt, stats);
}

// ---------------------------------------------------------------------------
// Binary container + JSON manifest
// ---------------------------------------------------------------------------
inline constexpr uint32_t kDatasetMagic = 0x44325654;  // "T2VD"
inline constexpr uint32_t kDatasetVersion = 1;

inline uint64_t dataset_content_hash(const PathDataset& ds) {
    uint64_t h = 14695981039346656037ULL;
    for (const PathRecord& r : ds.records) {
        int len = r.path.length();
        h = fnv1a(&len, sizeof(len), h);
        for (const Vec2& p : r.path.points) {
            float xy[2] = {static_cast<float>(p.x), static_cast<float>(p.y)};
            h = fnv1a(xy, sizeof(xy), h);
        }
        uint8_t closed = r.path.closed ? 1 : 0;
        h = fnv1a(&closed, 1, h);
    }
    return h;
}

inline void save_dataset(const PathDataset& ds, const std::filesystem::path& file) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary);
    if (!out) throw DatasetError("cannot write dataset: " + file.string());
    auto put = [&](const void* p, size_t n) { out.write(static_cast<const char*>(p), n); };
    uint64_t count = ds.records.size();
    uint32_t k_max = ds.k_max, img = ds.image_size;
    put(&kDatasetMagic, 4);
    put(&kDatasetVersion, 4);
    put(&count, 8);
    put(&k_max, 4);
    put(&img, 4);
    put(&ds.seed, 8);
    for (const PathRecord& r : ds.records) {
        uint16_t len = static_cast<uint16_t>(r.path.length());
        uint8_t closed = r.path.closed ? 1 : 0;
        uint8_t split = static_cast<uint8_t>(r.split);
        put(&len, 2);
        put(&closed, 1);
        put(&split, 1);
        std::vector<float> pts(static_cast<size_t>(ds.k_max) * 2, 0.0f);
        for (int i = 0; i < r.path.length(); ++i) {
            pts[2 * i] = static_cast<float>(r.path.points[i].x);
            pts[2 * i + 1] = static_cast<float>(r.path.points[i].y);
        }
        put(pts.data(), pts.size() * 4);
        std::vector<uint8_t> img8(r.image.size());
        for (size_t i = 0; i < r.image.size(); ++i)
            img8[i] = static_cast<uint8_t>(std::lround(std::clamp(r.image[i], 0.0f, 1.0f) * 255.0f));
        put(img8.data(), img8.size());
    }
}

inline PathDataset load_dataset(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DatasetError("cannot open dataset: " + file.string());
    auto get = [&](void* p, size_t n) {
        in.read(static_cast<char*>(p), n);
        if (!in) throw DatasetError("truncated dataset file: " + file.string());
    };
    uint32_t magic = 0, version = 0, k_max = 0, img = 0;
    uint64_t count = 0, seed = 0;
    get(&magic, 4);
    if (magic != kDatasetMagic) throw DatasetError("not a dataset file: " + file.string());
    get(&version, 4);
    if (version != kDatasetVersion) throw DatasetError("unsupported dataset version");
    get(&count, 8);
    get(&k_max, 4);
    get(&img, 4);
    get(&seed, 8);
    PathDataset ds;
    ds.k_max = static_cast<int>(k_max);
    ds.image_size = static_cast<int>(img);
    ds.seed = seed;
    ds.records.resize(count);
    std::vector<float> pts(static_cast<size_t>(k_max) * 2);
    std::vector<uint8_t> img8(static_cast<size_t>(img) * img);
    for (uint64_t i = 0; i < count; ++i) {
        uint16_t len = 0;
        uint8_t closed = 0, split = 0;
        get(&len, 2);
        get(&closed, 1);
        get(&split, 1);
        get(pts.data(), pts.size() * 4);
        get(img8.data(), img8.size());
        PathRecord& r = ds.records[i];
        r.path.closed = closed != 0;
        r.path.points.resize(len);
        for (int j = 0; j < len; ++j) r.path.points[j] = {pts[2 * j], pts[2 * j + 1]};
        r.image.resize(img8.size());
        for (size_t j = 0; j < img8.size(); ++j) r.image[j] = static_cast<float>(img8[j]) / 255.0f;
        r.split = static_cast<Split>(split);
    }
    return ds;
}

inline nlohmann::json dataset_manifest(const PathDataset& ds) {
    return nlohmann::json{
        {"records", ds.records.size()},
        {"train", ds.count(Split::train)},
        {"val", ds.count(Split::val)},
        {"k_max", ds.k_max},
        {"image_size", ds.image_size},
        {"seed", ds.seed},
        {"content_hash", hex64(dataset_content_hash(ds))},
        {"stats",
         {{"files_parsed", ds.stats.files_parsed},
          {"files_failed", ds.stats.files_failed},
          {"paths_seen", ds.stats.paths_seen},
          {"filtered_long", ds.stats.filtered_long},
          {"filtered_degenerate", ds.stats.filtered_degenerate},
          {"duplicates_removed", ds.stats.duplicates_removed}}},
    };
}

}  // namespace t2v::data
