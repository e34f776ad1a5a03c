#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "effgcn/rng.hpp"
#include "effgcn/serialize.hpp"

using namespace effgcn;
namespace fs = std::filesystem;

namespace {

fs::path tmp_file(const char* name) { return fs::temp_directory_path() / name; }

}  // namespace

TEST_CASE("tensor container round trip in both dtypes") {
    Rng rng(3);
    Array<float> f = Array<float>::uninit({2, 3, 4});
    for (auto& v : f.data) v = static_cast<float>(rng.normal());
    Array<double> d = Array<double>::uninit({5});
    for (auto& v : d.data) v = rng.normal();

    const auto pf = tmp_file("effgcn_t32.sktn");
    const auto pd = tmp_file("effgcn_t64.sktn");
    save_sktn(pf.string(), f);
    save_sktn(pd.string(), d);

    const auto rf = std::get<Array<float>>(load_sktn(pf.string()));
    CHECK(rf.shape == f.shape);
    CHECK(rf.data == f.data);
    const auto rd = std::get<Array<double>>(load_sktn(pd.string()));
    CHECK(rd.shape == d.shape);
    CHECK(rd.data == d.data);

    // cross-dtype load converts
    const auto as64 = load_sktn_as<double>(pf.string());
    for (std::size_t i = 0; i < f.data.size(); ++i)
        CHECK(as64.data[i] == static_cast<double>(f.data[i]));
    fs::remove(pf);
    fs::remove(pd);
}

TEST_CASE("bad magic reports offset zero") {
    const auto p = tmp_file("effgcn_badmagic.sktn");
    {
        std::ofstream f(p, std::ios::binary);
        f << "NOPE";
    }
    try {
        load_sktn(p.string());
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 0);
    }
    fs::remove(p);
}

TEST_CASE("unsupported version and dtype codes are rejected with offsets") {
    const auto p = tmp_file("effgcn_badver.sktn");
    {
        std::ofstream f(p, std::ios::binary);
        f << "SKTN";
        const unsigned char ver[4] = {9, 0, 0, 0};
        f.write(reinterpret_cast<const char*>(ver), 4);
    }
    try {
        load_sktn(p.string());
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 4);
    }
    {
        std::ofstream f(p, std::ios::binary);
        f << "SKTN";
        const unsigned char rest[6] = {1, 0, 0, 0, 7, 1};
        f.write(reinterpret_cast<const char*>(rest), 6);
    }
    try {
        load_sktn(p.string());
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 8);  // dtype byte
    }
    fs::remove(p);
}

TEST_CASE("truncated payloads raise format errors instead of crashing") {
    const auto p = tmp_file("effgcn_trunc.sktn");
    Array<float> a = Array<float>::full({4, 4}, 1.5f);
    save_sktn(p.string(), a);
    const auto full_size = fs::file_size(p);
    fs::resize_file(p, full_size - 7);
    CHECK_THROWS_AS(load_sktn(p.string()), FormatError);
    fs::resize_file(p, 6);  // cuts the header itself
    CHECK_THROWS_AS(load_sktn(p.string()), FormatError);
    fs::remove(p);
}

TEST_CASE("checkpoint round trip preserves names, shapes and bytes") {
    const auto p = tmp_file("effgcn_ck.skck");
    Rng rng(5);
    std::vector<std::pair<std::string, Array<float>>> entries;
    entries.emplace_back("layer.weight", Array<float>::uninit({3, 2}));
    entries.emplace_back("layer.bias", Array<float>::uninit({3}));
    for (auto& [name, arr] : entries)
        for (auto& v : arr.data) v = static_cast<float>(rng.normal());
    save_checkpoint_typed<float>(p.string(), entries);

    const auto loaded = load_checkpoint(p.string());
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].first == "layer.weight");
    CHECK(loaded[1].first == "layer.bias");
    const auto& w = std::get<Array<float>>(loaded[0].second);
    CHECK(w.shape == Shape({3, 2}));
    CHECK(w.data == entries[0].second.data);

    const auto map = load_checkpoint_as<float>(p.string());
    CHECK(map.at("layer.bias").data == entries[1].second.data);
    fs::remove(p);
}

TEST_CASE("checkpoint with the wrong magic is rejected") {
    const auto p = tmp_file("effgcn_badck.skck");
    {
        std::ofstream f(p, std::ios::binary);
        f << "SKTNxxxx";
    }
    CHECK_THROWS_AS(load_checkpoint(p.string()), FormatError);
    fs::remove(p);
}

TEST_CASE("sequence sidecar round trip, including the null label") {
    const auto p = tmp_file("effgcn_meta.meta.json");
    save_meta_json({std::nullopt, 42}, p.string());
    auto m = load_meta_json(p.string());
    CHECK(!m.label.has_value());
    CHECK(m.valid_frames == 42);
    save_meta_json({7, 9}, p.string());
    m = load_meta_json(p.string());
    CHECK(m.label == 7);
    CHECK(m.valid_frames == 9);
    fs::remove(p);
}
