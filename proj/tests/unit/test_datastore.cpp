#include <doctest.h>

#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ctrlvdiff/datastore.hpp"
#include "helpers.hpp"

using namespace ctrlvdiff;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

std::uint32_t le32(const std::string& s, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[off + static_cast<std::size_t>(i)]);
    return v;
}

}  // namespace

TEST_CASE("write then read is bit-identical") {
    testing::TempDir dir("ds-rt");
    const ClipRecord rec = testing::make_record("clip-0000", 3);
    write_clip(rec, dir.path());
    const ClipRecord back = read_clip(dir.path(), "clip-0000");
    CHECK(back.caption == rec.caption);
    CHECK(back.meta.frames == 2);
    CHECK(back.meta.seed == 3);
    CHECK(back.meta.scene_hash == rec.meta.scene_hash);
    for (Modality m : kAllModalities) {
        const auto& a = rec.get(m).data;
        const auto& b = back.get(m).data;
        REQUIRE(a.size() == b.size());
        CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
    }
}

TEST_CASE("tensor files follow the fixed little-endian layout") {
    testing::TempDir dir("ds-hdr");
    const ClipRecord rec = testing::make_record("clip-0001", 4, 2, 8);
    write_clip(rec, dir.path());
    const std::string bytes = slurp(dir.path() / "clip-0001" / "depth.tensor");
    REQUIRE(bytes.size() == 32 + 2 * 8 * 8 * 4);
    CHECK(bytes.substr(0, 4) == "MMV1");
    CHECK(le32(bytes, 4) == 2);
    CHECK(le32(bytes, 8) == 8);
    CHECK(le32(bytes, 12) == 8);
    CHECK(le32(bytes, 16) == 1);
    CHECK(le32(bytes, 20) == static_cast<std::uint32_t>(index_of(Modality::depth)));
    for (std::size_t i = 24; i < 32; ++i) CHECK(bytes[i] == '\0');
    float first;
    std::memcpy(&first, bytes.data() + 32, 4);
    CHECK(first == rec.get(Modality::depth).data[0]);
    CHECK(slurp(dir.path() / "clip-0001" / "caption.txt") == rec.caption);
    const auto meta = nlohmann::json::parse(slurp(dir.path() / "clip-0001" / "meta.json"));
    CHECK(meta.at("clip_id") == "clip-0001");
    CHECK(meta.at("shape") == nlohmann::json::array({2, 8, 8}));
    CHECK(meta.at("fps") == 16.0);
    CHECK(meta.at("format_version") == 1);
    CHECK(meta.contains("seed"));
}

TEST_CASE("existing clips are not overwritten by default") {
    testing::TempDir dir("ds-over");
    ClipRecord rec = testing::make_record("clip-0002", 5);
    write_clip(rec, dir.path());
    CHECK_THROWS_AS(write_clip(rec, dir.path()), ValidationError);
    rec.caption = "replaced";
    WriteOptions o;
    o.overwrite = true;
    write_clip(rec, dir.path(), o);
    CHECK(read_clip(dir.path(), "clip-0002").caption == "replaced");
    for (const auto& e : fs::directory_iterator(dir.path())) CHECK(e.path().filename().string().front() != '.');
}

TEST_CASE("invalid records leave nothing behind") {
    testing::TempDir dir("ds-bad");
    ClipRecord rec = testing::make_record("clip-0003", 6);
    rec.caption.clear();
    CHECK_THROWS_AS(write_clip(rec, dir.path()), ValidationError);
    rec = testing::make_record("clip-0003", 6);
    rec.tensors.erase(Modality::canny);
    CHECK_THROWS_AS(write_clip(rec, dir.path()), ValidationError);
    CHECK(fs::is_empty(dir.path()));
}

TEST_CASE("corrupt magic is a format error") {
    testing::TempDir dir("ds-magic");
    write_clip(testing::make_record("c", 7), dir.path());
    {
        std::fstream f(dir.path() / "c" / "depth.tensor", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("MMV2", 4);
    }
    CHECK_THROWS_AS(read_clip(dir.path(), "c", {Modality::depth}), FormatError);
    CHECK_NOTHROW(read_clip(dir.path(), "c", {Modality::normal}));
}

TEST_CASE("truncated payloads and tampered meta are format errors") {
    testing::TempDir dir("ds-tamper");
    write_clip(testing::make_record("c", 8), dir.path());
    SUBCASE("truncated") {
        const fs::path p = dir.path() / "c" / "rgb.tensor";
        fs::resize_file(p, fs::file_size(p) - 4);
        CHECK_THROWS_AS(read_clip(dir.path(), "c"), FormatError);
    }
    SUBCASE("meta frame count") {
        const fs::path p = dir.path() / "c" / "meta.json";
        auto j = nlohmann::json::parse(slurp(p));
        j["shape"][0] = 3;
        std::ofstream(p) << j.dump();
        CHECK_THROWS_AS(read_clip(dir.path(), "c", {Modality::depth}), FormatError);
    }
}

TEST_CASE("partial loads only open the requested files") {
    testing::TempDir dir("ds-partial");
    write_clip(testing::make_record("c", 9), dir.path());
    std::set<std::string> opened;
    ReadOptions o;
    o.on_open = [&](const fs::path& p) { opened.insert(p.filename().string()); };
    const ClipRecord r = read_clip(dir.path(), "c", {Modality::depth}, o);
    CHECK(r.tensors.size() == 1);
    CHECK(r.has(Modality::depth));
    CHECK_FALSE(r.has(Modality::rgb));
    CHECK_THROWS_AS(r.get(Modality::rgb), ValidationError);
    CHECK(opened == std::set<std::string>{"meta.json", "caption.txt", "depth.tensor"});

    // Other modality files can vanish without affecting the subset read.
    for (Modality m : kAllModalities)
        if (m != Modality::depth) fs::remove(dir.path() / "c" / (std::string(name_of(m)) + ".tensor"));
    CHECK_NOTHROW(read_clip(dir.path(), "c", {Modality::depth}));
    const auto err = [&] {
        try {
            read_clip(dir.path(), "c", {Modality::normal});
        } catch (const ValidationError& e) {
            return std::string(e.what());
        }
        return std::string();
    }();
    CHECK(err.find("normal") != std::string::npos);
}

TEST_CASE("manifests split deterministically and exhaustively") {
    testing::TempDir dir("ds-man");
    for (int i = 0; i < 10; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "clip-%04d", i);
        write_clip(testing::make_record(id, static_cast<std::uint64_t>(i), 2, 8), dir.path());
    }
    const Manifest m = build_manifest(dir.path(), {0.8, 0.1, 0.1}, 17);
    CHECK(m.ids(Split::train).size() == 8);
    CHECK(m.ids(Split::val).size() == 1);
    CHECK(m.ids(Split::test).size() == 1);
    CHECK(std::is_sorted(m.clip_ids.begin(), m.clip_ids.end()));
    std::set<std::string> all;
    std::size_t total = 0;
    for (Split s : {Split::train, Split::val, Split::test}) {
        CHECK(std::is_sorted(m.ids(s).begin(), m.ids(s).end()));
        total += m.ids(s).size();
        all.insert(m.ids(s).begin(), m.ids(s).end());
    }
    CHECK(total == 10);
    CHECK(all == std::set<std::string>(m.clip_ids.begin(), m.clip_ids.end()));

    const Manifest again = build_manifest(dir.path(), {0.8, 0.1, 0.1}, 17);
    CHECK(again.splits == m.splits);
    const Manifest read = read_manifest(dir.path());
    CHECK(read.splits == m.splits);
    CHECK(read.clip_ids == m.clip_ids);
    CHECK(build_manifest(dir.path(), {0.5, 0.3, 0.2}, 18).ids(Split::train).size() == 5);

    CHECK_THROWS_AS(build_manifest(dir.path(), {0.8, 0.1, 0.2}, 1), ValidationError);
}

TEST_CASE("manifests need at least one clip") {
    testing::TempDir dir("ds-empty");
    CHECK_THROWS_AS(build_manifest(dir.path(), {1.0, 0.0, 0.0}, 1), ValidationError);
}
