#include <doctest.h>

#include <fstream>
#include <random>

#include "test_support.hpp"
#include "vesseltopo/metaimage.hpp"
#include "vesseltopo/volume.hpp"

using namespace vtopo;
using vtopo::testing::TempDir;

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

std::string header(const std::string& dims, const std::string& type, const std::string& raw) {
    return "ObjectType = Image\nNDims = 3\nDimSize = " + dims +
           "\nElementSpacing = 1 1 1\nOffset = 0 0 0\nElementType = " + type + "\nElementDataFile = " + raw + "\n";
}

template <typename E>
std::string error_message(const std::function<void()>& f) {
    try {
        f();
    } catch (const E& e) {
        return e.what();
    }
    return "<no error>";
}

}  // namespace

TEST_SUITE("volume-core") {

TEST_CASE("grid index and voxel are inverse") {
    Grid g{{5, 4, 3}, Vec3(0.5, 1, 2), Vec3(1, 2, 3)};
    for (std::size_t i = 0; i < g.dims.count(); ++i) CHECK(g.index(g.voxel(i)) == i);
    CHECK(g.index(1, 0, 0) == 1);
    CHECK(g.index(0, 1, 0) == 5);
    CHECK(g.index(0, 0, 1) == 20);
    const Vec3 w = g.to_world({2, 1, 1});
    CHECK(w.isApprox(Vec3(2.0, 3.0, 5.0)));
    CHECK(g.nearest_voxel(w + Vec3(0.2, 0.4, -0.9)) == Voxel{2, 1, 1});
}

TEST_CASE("volume construction validates its invariants") {
    CHECK_THROWS_AS(MaskVolume(Dims{0, 1, 1}), InvalidArgument);
    CHECK_THROWS_AS(MaskVolume(Dims{1, 1, 1}, Vec3(1, 0, 1)), InvalidArgument);
    CHECK_THROWS_AS(FloatVolume(Grid{{2, 2, 2}, Vec3(1, 1, 1), Vec3::Zero()}, std::vector<float>(7)), InvalidArgument);
    MaskVolume m(Dims{2, 2, 2});
    CHECK(m.size() == 8);
    CHECK(MaskVolume::kind() == ElementKind::UInt8);
    CHECK(FloatVolume::kind() == ElementKind::Float32);
}

TEST_CASE("require_binary rejects values other than 0 and 1") {
    MaskVolume m(Dims{2, 1, 1});
    m[1] = 1;
    CHECK_NOTHROW(require_binary(m));
    m[0] = 2;
    CHECK_THROWS_AS(require_binary(m), InvalidArgument);
}

TEST_CASE("trilinear sampling reproduces linear fields") {
    FloatVolume v(Dims{4, 5, 6}, Vec3(1, 2, 0.5));
    for (int z = 0; z < 6; ++z)
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 4; ++x) {
                const Vec3 w = v.grid().to_world({x, y, z});
                v.at(x, y, z) = static_cast<float>(1.0 + 2.0 * w.x() - w.y() + 3.0 * w.z());
            }
    const Vec3 p(1.3, 4.7, 1.1);
    CHECK(sample_trilinear(v, p) == doctest::Approx(1.0 + 2.6 - 4.7 + 3.3).epsilon(1e-5));
}

TEST_CASE("all-zero 2x2x2 uint8 file loads") {
    TempDir dir("zero");
    write_text(dir / "z.mhd", header("2 2 2", "MET_UCHAR", "z.raw"));
    write_text(dir / "z.raw", std::string(8, '\0'));
    const auto v = load_mask(dir / "z.mhd");
    CHECK(v.size() == 8);
    CHECK(count_foreground(v) == 0);
}

TEST_CASE("payload size mismatch names both sizes") {
    TempDir dir("short");
    write_text(dir / "s.mhd", header("4 3 2", "MET_UCHAR", "s.raw"));
    write_text(dir / "s.raw", std::string(23, '\0'));
    const auto msg = error_message<FormatError>([&] { (void)load_volume(dir / "s.mhd"); });
    CHECK(msg.find("23") != std::string::npos);
    CHECK(msg.find("24") != std::string::npos);
}

TEST_CASE("malformed headers name the offending key") {
    TempDir dir("bad");
    write_text(dir / "p.raw", std::string(8, '\0'));

    write_text(dir / "a.mhd", header("2 2", "MET_UCHAR", "p.raw"));
    CHECK(error_message<FormatError>([&] { (void)load_volume(dir / "a.mhd"); }).find("DimSize") !=
          std::string::npos);

    write_text(dir / "b.mhd", header("2 2 2", "MET_SHORT", "p.raw"));
    CHECK(error_message<FormatError>([&] { (void)load_volume(dir / "b.mhd"); }).find("ElementType") !=
          std::string::npos);

    write_text(dir / "c.mhd", "ObjectType = Image\nNDims = 3\nDimSize = 2 2 2\nElementType = MET_UCHAR\n");
    CHECK(error_message<FormatError>([&] { (void)load_volume(dir / "c.mhd"); }).find("ElementDataFile") !=
          std::string::npos);

    CHECK_THROWS_AS((void)load_volume(dir / "missing.mhd"), IoError);
    CHECK_THROWS_AS((void)load_float_volume(dir / "a.mhd"), FormatError);
}

TEST_CASE("round trip is bitwise identical for both element kinds") {
    TempDir dir("rt");
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const Dims d = vtopo::testing::random_dims(rng, 1, 8);
        const Vec3 spacing(vtopo::testing::uniform_real(rng, 0.3, 2.0), vtopo::testing::uniform_real(rng, 0.3, 2.0),
                           vtopo::testing::uniform_real(rng, 0.3, 2.0));
        const Vec3 origin(vtopo::testing::uniform_real(rng, -50, 50), vtopo::testing::uniform_real(rng, -50, 50),
                          vtopo::testing::uniform_real(rng, -50, 50));
        FloatVolume f(d, spacing, origin);
        MaskVolume m(d, spacing, origin);
        for (std::size_t i = 0; i < f.size(); ++i) {
            f[i] = static_cast<float>(vtopo::testing::uniform_real(rng, -1e3, 1e3));
            m[i] = static_cast<std::uint8_t>(rng() & 0xff);
        }
        save_volume(f, dir / "f.mhd");
        save_volume(m, dir / "m.mhd");
        const auto f2 = load_float_volume(dir / "f.mhd");
        const auto m2 = load_mask(dir / "m.mhd");
        CHECK(f2 == f);
        CHECK(m2 == m);
        CHECK(f2.spacing() == f.spacing());
        CHECK(f2.origin() == f.origin());
    }
}

TEST_CASE("8^3 float volume round trips through the variant interface") {
    TempDir dir("var");
    FloatVolume f(Dims{8, 8, 8});
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(i) * 0.25f;
    save_volume(AnyVolume{f}, dir / "v.mhd");
    const auto back = load_volume(dir / "v.mhd");
    REQUIRE(std::holds_alternative<FloatVolume>(back));
    CHECK(std::get<FloatVolume>(back) == f);
}

TEST_CASE("1x1x1 uint8 volume writes a one byte payload") {
    TempDir dir("one");
    MaskVolume m(Dims{1, 1, 1});
    m[0] = 1;
    save_volume(m, dir / "one.mhd");
    CHECK(std::filesystem::file_size(dir / "one.raw") == 1);
}

TEST_CASE("saving into a missing or read-only location fails with IoError") {
    MaskVolume m(Dims{1, 1, 1});
    CHECK_THROWS_AS(save_volume(m, "/nonexistent_dir_vtopo/x.mhd"), IoError);
    CHECK_THROWS_AS(save_volume(m, "/proc/vtopo.mhd"), IoError);
    CHECK_THROWS_AS(save_volume(m, "/tmp/vtopo_no_extension.raw"), InvalidArgument);
}

}
