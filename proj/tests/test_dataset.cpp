#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "t2v/dataset.hpp"
#include "test_shapes.hpp"

using namespace t2v;
using namespace t2v::data;
namespace fs = std::filesystem;

namespace {

struct ScratchDir {
    fs::path dir;
    explicit ScratchDir(const std::string& name) {
        dir = fs::temp_directory_path() / ("t2v_" + name + "_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~ScratchDir() { fs::remove_all(dir); }
};

std::string square_icon_svg(double x, double y, double side, int copies = 1) {
    std::string s = "<svg width=\"100\" height=\"100\">";
    for (int i = 0; i < copies; ++i)
        s += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) + "\" width=\"" +
             std::to_string(side) + "\" height=\"" + std::to_string(side) + "\" fill=\"black\"/>";
    s += "</svg>";
    return s;
}

std::string long_path_svg() {
    // 17 open segments = 52 control points, above the k_max = 50 cap
    std::string d = "M 0 50";
    for (int i = 1; i <= 17; ++i) {
        double x = 2.0 * i;
        d += " C " + std::to_string(x - 1.2) + " 40 " + std::to_string(x - 0.6) + " 60 " +
             std::to_string(x) + " 50";
    }
    return "<svg width=\"100\" height=\"100\"><path d=\"" + d + "\" fill=\"black\"/></svg>";
}

}  // namespace

TEST_CASE("duplicate shapes collapse to one record") {
    ScratchDir scratch("dedup");
    write_text_file(scratch.dir / "icon.svg", square_icon_svg(10, 10, 30, 2));
    PathDataset ds = build_dataset(scratch.dir, {.seed = 3});
    CHECK(ds.records.size() == 1);
    CHECK(ds.stats.duplicates_removed == 1);
}

TEST_CASE("rotated start point of a closed path still deduplicates") {
    svg::SvgDocument doc;
    doc.width = doc.height = 1;
    svg::SvgEntry a, b;
    a.path = test_shapes::square_path({0.2, 0.2}, {0.8, 0.8});
    b.path = a.path;
    // rotate start by one full segment
    std::rotate(b.path.points.begin(), b.path.points.begin() + 3, b.path.points.end());
    doc.entries = {a, b};
    PathDataset ds = build_dataset_from_documents({doc}, {.seed = 1});
    CHECK(ds.records.size() == 1);
    CHECK(ds.stats.duplicates_removed == 1);
}

TEST_CASE("overlong paths are filtered out") {
    ScratchDir scratch("long");
    write_text_file(scratch.dir / "long.svg", long_path_svg());
    write_text_file(scratch.dir / "ok.svg", square_icon_svg(10, 10, 30));
    PathDataset ds = build_dataset(scratch.dir, {.seed = 3});
    CHECK(ds.records.size() == 1);
    CHECK(ds.stats.filtered_long == 1);
}

TEST_CASE("square raster ink fraction matches normalized area within 2 percent") {
    ScratchDir scratch("area");
    write_text_file(scratch.dir / "sq.svg", square_icon_svg(20, 20, 50));
    PathDataset ds = build_dataset(scratch.dir, {.seed = 3});
    REQUIRE(ds.records.size() == 1);
    const PathRecord& r = ds.records[0];
    double ink = 0;
    for (float v : r.image) ink += 1.0 - v;
    ink /= static_cast<double>(r.image.size());
    double area = geom::path_area(r.path);
    CHECK(ink == doctest::Approx(area).epsilon(0.02));
}

TEST_CASE("dataset content is independent of corpus file order") {
    std::string icon_a = square_icon_svg(10, 10, 20);
    std::string icon_b = square_icon_svg(40, 40, 35);
    std::string icon_c = "<svg width=\"100\" height=\"100\"><circle cx=\"50\" cy=\"50\" r=\"25\" fill=\"black\"/></svg>";

    ScratchDir s1("order1"), s2("order2");
    write_text_file(s1.dir / "a.svg", icon_a);
    write_text_file(s1.dir / "b.svg", icon_b);
    write_text_file(s1.dir / "c.svg", icon_c);
    // same content, reshuffled names
    write_text_file(s2.dir / "a.svg", icon_c);
    write_text_file(s2.dir / "b.svg", icon_a);
    write_text_file(s2.dir / "c.svg", icon_b);

    PathDataset d1 = build_dataset(s1.dir, {.seed = 11});
    PathDataset d2 = build_dataset(s2.dir, {.seed = 11});
    CHECK(d1.records.size() == d2.records.size());
    CHECK(dataset_content_hash(d1) == dataset_content_hash(d2));
}

TEST_CASE("record rasters match re-rasterization within 1/255 MAE") {
    ScratchDir scratch("reraster");
    write_text_file(scratch.dir / "a.svg", square_icon_svg(10, 10, 42));
    write_text_file(scratch.dir / "b.svg",
                    "<svg width=\"100\" height=\"100\"><circle cx=\"40\" cy=\"60\" r=\"22\" fill=\"black\"/></svg>");
    PathDataset ds = build_dataset(scratch.dir, {.seed = 3});

    fs::path file = scratch.dir / "out.t2vd";
    save_dataset(ds, file);
    PathDataset loaded = load_dataset(file);
    REQUIRE(loaded.records.size() == ds.records.size());
    for (const PathRecord& r : loaded.records) {
        std::vector<float> again = raster::rasterize_shape_gray(r.path, loaded.image_size);
        double mae = 0;
        for (size_t i = 0; i < again.size(); ++i) mae += std::fabs(again[i] - r.image[i]);
        mae /= static_cast<double>(again.size());
        CHECK(mae <= 1.0 / 255.0);
    }
}

TEST_CASE("container round trip preserves records and manifest fields") {
    ScratchDir scratch("container");
    write_text_file(scratch.dir / "a.svg", square_icon_svg(5, 5, 60));
    PathDataset ds = build_dataset(scratch.dir, {.seed = 42});
    fs::path file = scratch.dir / "ds.t2vd";
    save_dataset(ds, file);
    PathDataset loaded = load_dataset(file);
    CHECK(loaded.seed == 42);
    CHECK(loaded.k_max == ds.k_max);
    CHECK(loaded.records.size() == ds.records.size());
    for (size_t i = 0; i < ds.records.size(); ++i) {
        CHECK(loaded.records[i].path.length() == ds.records[i].path.length());
        CHECK(loaded.records[i].split == ds.records[i].split);
    }

    nlohmann::json manifest = dataset_manifest(loaded);
    CHECK(manifest["records"] == loaded.records.size());
    CHECK(manifest.contains("content_hash"));
}

TEST_CASE("normalization fits the margin box and preserves aspect") {
    geom::BezierPath p = test_shapes::square_path({0, 0}, {10, 5});
    REQUIRE(normalize_path(p));
    geom::Vec2 lo{1e9, 1e9}, hi{-1e9, -1e9};
    for (auto q : p.points) {
        lo.x = std::min(lo.x, q.x);
        lo.y = std::min(lo.y, q.y);
        hi.x = std::max(hi.x, q.x);
        hi.y = std::max(hi.y, q.y);
    }
    CHECK(hi.x - lo.x == doctest::Approx(0.9));
    CHECK(hi.y - lo.y == doctest::Approx(0.45));  // aspect preserved
    CHECK((lo.x + hi.x) / 2 == doctest::Approx(0.5));

    geom::BezierPath degenerate;
    degenerate.points = {{1, 1}, {1, 1}, {1, 1}, {1, 1}};
    CHECK_FALSE(normalize_path(degenerate));
}

TEST_CASE("empty corpus raises a dataset error") {
    ScratchDir scratch("empty");
    CHECK_THROWS_AS(build_dataset(scratch.dir), DatasetError);
    write_text_file(scratch.dir / "bad.svg", "not xml at all");
    CHECK_THROWS_AS(build_dataset(scratch.dir), DatasetError);
}
