#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "ctrlvdiff/diffusion.hpp"
#include "ctrlvdiff/hmcs.hpp"

using namespace ctrlvdiff;

TEST_CASE("every draw partitions the modalities with a live noisy set") {
    Rng rng(1);
    for (int i = 0; i < 2000; ++i) {
        const RoleAssignment a = assign_roles(rng, 0.1);
        CHECK_NOTHROW(a.validate());
        CHECK(a.k >= 1);
        CHECK(a.k <= 7);
        CHECK(a.count(Role::condition) + a.count(Role::none) + a.count(Role::noisy) == kNumModalities);
        CHECK(a.count(Role::noisy) >= 1);
        if (a.text_only) {
            CHECK(a.count(Role::condition) == 0);
        } else {
            CHECK(a.count(Role::condition) == a.k);
            CHECK(a.count(Role::none) == a.d);
        }
    }
}

TEST_CASE("dropout size is uniform over its capped range") {
    Rng rng(2);
    std::map<std::pair<int, int>, int> counts;
    for (int i = 0; i < 40000; ++i) {
        const RoleAssignment a = assign_roles(rng, 0.0);
        counts[{a.k, a.d}]++;
        CHECK(a.d <= kNumModalities - 1 - a.k);
    }
    // k = 3: d uniform on {1..4}, each with probability 1/7 * 1/4.
    for (int d = 1; d <= 4; ++d) CHECK(std::abs(counts[{3, d}] / 40000.0 - 1.0 / 28.0) < 0.01);
    CHECK(counts[{7, 0}] > 0);
}

TEST_CASE("two modalities without text give one condition and one target") {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const RoleAssignment a = assign_roles(rng, 2, 0.0);
        CHECK(a.count(Role::condition) == 1);
        CHECK(a.of(Modality::rgb) != Role::none);
        CHECK(a.of(Modality::depth) != Role::none);
        CHECK(a.count(Role::noisy) == 1);
        for (int m = 2; m < kNumModalities; ++m) CHECK(a.roles[static_cast<std::size_t>(m)] == Role::none);
    }
}

TEST_CASE("invalid sampler arguments are rejected") {
    Rng rng(0);
    CHECK_THROWS_AS(assign_roles(rng, 1, 0.1), ValidationError);
    CHECK_THROWS_AS(assign_roles(rng, 8, -0.1), ValidationError);
    CHECK_THROWS_AS(assign_roles(rng, 8, 1.5), ValidationError);
}

TEST_CASE("text-only rate and role coverage over ten thousand draws") {
    Rng rng(2024);
    int text = 0;
    std::set<std::pair<int, int>> seen;
    for (int i = 0; i < 10000; ++i) {
        const RoleAssignment a = assign_roles(rng, 0.1);
        text += a.text_only;
        for (int m = 0; m < kNumModalities; ++m) seen.emplace(m, static_cast<int>(a.roles[static_cast<std::size_t>(m)]));
    }
    CHECK(text / 10000.0 >= 0.09);
    CHECK(text / 10000.0 <= 0.11);
    CHECK(seen.size() == static_cast<std::size_t>(kNumModalities * kNumRoles));
}

TEST_CASE("p_t of one makes every draw text-only") {
    Rng rng(4);
    for (int i = 0; i < 500; ++i) {
        const RoleAssignment a = assign_roles(rng, 1.0);
        CHECK(a.text_only);
        CHECK(a.count(Role::condition) == 0);
    }
}

TEST_CASE("role records round-trip") {
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        RoleAssignment a = assign_roles(rng, 0.3);
        const std::string line = a.to_record(1000 + i);
        std::uint64_t seed = 0;
        const RoleAssignment b = RoleAssignment::from_record(line, &seed);
        CHECK(seed == 1000u + i);
        CHECK(b.roles == a.roles);
        CHECK(b.text_only == a.text_only);
    }
    CHECK_THROWS_AS(RoleAssignment::from_record("seed=1 rgb:noisy"), ValidationError);
}

TEST_CASE("forward noise endpoints are exact") {
    Rng rng(6);
    std::vector<double> x(64), eps(64);
    for (double& v : x) v = rng.normal();
    for (double& v : eps) v = rng.normal();
    CHECK(apply_forward_noise_abar(x, 1.0, eps) == x);
    CHECK(apply_forward_noise_abar(x, 0.0, eps) == eps);
    const auto y = apply_forward_noise_abar(x, 0.36, eps);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(0.6 * x[i] + 0.8 * eps[i]));
}

TEST_CASE("forward noise rejects shape and timestep errors") {
    const NoiseSchedule s = make_schedule(ScheduleKind::linear_beta, 10);
    std::vector<double> x(4, 1.0), eps(3, 0.0);
    CHECK_THROWS_AS(apply_forward_noise(x, 0, eps, s), ValidationError);
    eps.resize(4);
    CHECK_THROWS_AS(apply_forward_noise(x, 10, eps, s), ValidationError);
    CHECK_THROWS_AS(apply_forward_noise(x, -1, eps, s), ValidationError);
}

TEST_CASE("noised unit-variance data keeps unit variance") {
    Rng rng(7);
    const std::size_t n = 100000;
    std::vector<double> x(n), eps(n);
    for (double abar : {0.25, 0.9, 0.01}) {
        for (double& v : x) v = rng.normal();
        for (double& v : eps) v = rng.normal();
        const auto y = apply_forward_noise_abar(x, abar, eps);
        double mean = 0, sq = 0;
        for (double v : y) mean += v;
        mean /= n;
        for (double v : y) sq += (v - mean) * (v - mean);
        CHECK(sq / (n - 1) == doctest::Approx(1.0).epsilon(0.02));
    }
}

TEST_CASE("model input honours every role") {
    const LatentGrid grid{2, 3, 3, 4};
    const NoiseSchedule s = make_schedule(ScheduleKind::linear_beta, 100);
    LatentSet lat;
    Rng fill(8);
    for (int m = 0; m < kNumModalities; ++m) {
        std::vector<double> v(grid.slice_numel());
        for (double& e : v) e = fill.normal();
        lat[static_cast<std::size_t>(m)] = v;
    }
    RoleAssignment roles = RoleAssignment::all(Role::condition);
    roles.roles[index_of(Modality::rgb)] = Role::noisy;
    roles.roles[index_of(Modality::metallic)] = Role::none;

    Rng a(9), b(9);
    const ModelInput in = build_model_input(lat, grid, roles, 0, s, a, {"red"});
    const ModelInput again = build_model_input(lat, grid, roles, 0, s, b, {"red"});
    CHECK(std::memcmp(in.stack.data(), again.stack.data(), in.stack.size() * sizeof(double)) == 0);

    CHECK(in.stack.size() == grid.slice_numel() * kNumModalities);
    CHECK(in.absent[index_of(Modality::metallic)] == 1.0f);
    for (double v : in.slice(Modality::metallic)) CHECK(v == 0.0);
    CHECK(in.slice(Modality::depth) == *lat[index_of(Modality::depth)]);
    CHECK(in.absent[index_of(Modality::depth)] == 0.0f);

    // t = 0 keeps the noisy slice close to its clean latent, and the stored
    // noise reproduces it exactly.
    const auto rgb = in.slice(Modality::rgb);
    const auto& x = *lat[index_of(Modality::rgb)];
    const auto& eps = in.noise[index_of(Modality::rgb)];
    REQUIRE(eps.size() == x.size());
    const auto expect = apply_forward_noise(x, 0, eps, s);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(rgb[i] == expect[i]);
        CHECK(std::abs(rgb[i] - x[i]) < 0.06);
    }
    CHECK(in.noise[index_of(Modality::depth)].empty());
}

TEST_CASE("model input requires latents for live roles") {
    const LatentGrid grid{1, 2, 2, 3};
    const NoiseSchedule s = make_schedule(ScheduleKind::linear_beta, 10);
    LatentSet lat;
    lat[0] = std::vector<double>(grid.slice_numel(), 0.1);
    RoleAssignment roles = RoleAssignment::all(Role::none);
    roles.roles[0] = Role::noisy;
    Rng rng(1);
    CHECK_NOTHROW(build_model_input(lat, grid, roles, 3, s, rng));
    roles.roles[1] = Role::condition;
    CHECK_THROWS_AS(build_model_input(lat, grid, roles, 3, s, rng), ValidationError);
}
