#include "ctrlvdiff/hmcs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ctrlvdiff {

std::string_view name_of(Role r) {
    switch (r) {
        case Role::condition: return "condition";
        case Role::none: return "none";
        case Role::noisy: return "noisy";
    }
    return "?";
}

Role parse_role(std::string_view name) {
    if (name == "condition") return Role::condition;
    if (name == "none") return Role::none;
    if (name == "noisy") return Role::noisy;
    throw ValidationError("unknown role '" + std::string(name) + "'");
}

int RoleAssignment::count(Role r) const {
    return static_cast<int>(std::count(roles.begin(), roles.end(), r));
}

void RoleAssignment::validate() const {
    require(count(Role::condition) + count(Role::none) + count(Role::noisy) == kNumModalities,
            "role assignment does not partition the modality set");
    require(count(Role::noisy) > 0, "role assignment has no noisy modality");
    if (text_only) require(count(Role::condition) == 0, "text-only assignment has condition modalities");
}

RoleAssignment RoleAssignment::all(Role r) {
    RoleAssignment a;
    a.roles.fill(r);
    return a;
}

std::string RoleAssignment::to_record(std::uint64_t seed) const {
    std::ostringstream os;
    os << "seed=" << seed << " text_only=" << (text_only ? 1 : 0);
    for (Modality m : kAllModalities) os << ' ' << name_of(m) << ':' << name_of(of(m));
    return os.str();
}

RoleAssignment RoleAssignment::from_record(const std::string& line, std::uint64_t* seed) {
    RoleAssignment a;
    std::array<bool, kNumModalities> seen{};
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) {
        if (tok.rfind("seed=", 0) == 0) {
            if (seed) *seed = std::stoull(tok.substr(5));
        } else if (tok.rfind("text_only=", 0) == 0) {
            a.text_only = tok.substr(10) == "1";
        } else {
            const auto colon = tok.find(':');
            require(colon != std::string::npos, "role record: malformed token '" + tok + "'");
            const Modality m = parse_modality(tok.substr(0, colon));
            a.roles[static_cast<std::size_t>(index_of(m))] = parse_role(tok.substr(colon + 1));
            seen[static_cast<std::size_t>(index_of(m))] = true;
        }
    }
    for (bool s : seen) require(s, "role record: missing modality");
    a.k = a.count(Role::condition);
    a.d = a.count(Role::none);
    return a;
}

RoleAssignment assign_roles(Rng& rng, double p_text) { return assign_roles(rng, kNumModalities, p_text); }

RoleAssignment assign_roles(Rng& rng, int n, double p_text) {
    require(n >= 2, "assign_roles: need at least two modalities");
    require(n <= kNumModalities, "assign_roles: at most 8 modalities");
    require(p_text >= 0.0 && p_text <= 1.0, "assign_roles: p_t must lie in [0,1]");

    RoleAssignment a;
    a.roles.fill(Role::none);
    a.p_text = p_text;

    std::vector<int> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    rng.shuffle(pool);

    // Conditional sampling: k ~ U{1..n-1}, C = first k of a random permutation.
    a.k = rng.uniform_int(1, n - 1);
    std::vector<int> cond(pool.begin(), pool.begin() + a.k);
    std::vector<int> rest(pool.begin() + a.k, pool.end());

    // Modality dropout from M \ C, capped so at least one target survives.
    // For n - 1 - k == 0 there is nothing left to drop.
    const int cap = n - 1 - a.k;
    a.d = 0;
    if (cap >= 1) {
        int d = rng.uniform_int(1, n - 1);
        while (d > cap) d = rng.uniform_int(1, n - 1);
        a.d = d;
    }
    rng.shuffle(rest);
    for (int i : cond) a.roles[static_cast<std::size_t>(i)] = Role::condition;
    for (std::size_t j = 0; j < rest.size(); ++j)
        a.roles[static_cast<std::size_t>(rest[j])] = static_cast<int>(j) < a.d ? Role::none : Role::noisy;

    // Text-only: the caption replaces C and every non-none modality becomes a target.
    a.text_only = rng.bernoulli(p_text);
    if (a.text_only)
        for (int i : cond) a.roles[static_cast<std::size_t>(i)] = Role::noisy;
    return a;
}

double NoiseSchedule::at(int t) const {
    require(t >= 0 && t < num_steps(), "timestep " + std::to_string(t) + " outside schedule");
    return alpha_bar[static_cast<std::size_t>(t)];
}

std::vector<double> apply_forward_noise_abar(const std::vector<double>& x, double alpha_bar,
                                             const std::vector<double>& eps) {
    require(x.size() == eps.size(), "apply_forward_noise: shape mismatch between x and eps");
    require(alpha_bar >= 0.0 && alpha_bar <= 1.0, "apply_forward_noise: alpha_bar outside [0,1]");
    const double a = std::sqrt(alpha_bar), b = std::sqrt(1.0 - alpha_bar);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * eps[i];
    return out;
}

std::vector<double> apply_forward_noise(const std::vector<double>& x, int t, const std::vector<double>& eps,
                                        const NoiseSchedule& schedule) {
    return apply_forward_noise_abar(x, schedule.at(t), eps);
}

std::vector<double> ModelInput::slice(Modality m) const {
    const std::size_t c = static_cast<std::size_t>(grid.channels);
    const std::size_t off = static_cast<std::size_t>(index_of(m)) * c;
    std::vector<double> out(grid.slice_numel());
    for (int n = 0; n < grid.tokens(); ++n)
        std::copy_n(stack.begin() + static_cast<std::ptrdiff_t>(n * stride() + off), c,
                    out.begin() + static_cast<std::ptrdiff_t>(n * c));
    return out;
}

void ModelInput::set_slice(Modality m, const std::vector<double>& values) {
    require(values.size() == grid.slice_numel(), "set_slice: size mismatch");
    const std::size_t c = static_cast<std::size_t>(grid.channels);
    const std::size_t off = static_cast<std::size_t>(index_of(m)) * c;
    for (int n = 0; n < grid.tokens(); ++n)
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(n * c), c,
                    stack.begin() + static_cast<std::ptrdiff_t>(n * stride() + off));
}

ModelInput build_model_input(const LatentSet& latents, const LatentGrid& grid, const RoleAssignment& roles, int t,
                             const NoiseSchedule& schedule, Rng& rng, std::vector<std::string> caption_tokens) {
    require(grid.tokens() > 0 && grid.channels > 0, "build_model_input: empty latent grid");
    ModelInput in;
    in.grid = grid;
    in.roles = roles.roles;
    in.t = t;
    in.caption_tokens = std::move(caption_tokens);
    in.stack.assign(static_cast<std::size_t>(grid.tokens()) * in.stride(), 0.0);
    const double abar = schedule.at(t);

    for (Modality m : kAllModalities) {
        const auto i = static_cast<std::size_t>(index_of(m));
        const Role r = roles.roles[i];
        if (r == Role::none) {
            in.absent[i] = 1.0f;
            continue;
        }
        require(latents[i].has_value(), "build_model_input: missing latent for " + std::string(name_of(m)));
        const auto& x = *latents[i];
        require(x.size() == grid.slice_numel(),
                "build_model_input: latent for " + std::string(name_of(m)) + " does not match the grid");
        if (r == Role::condition) {
            in.set_slice(m, x);
        } else {
            std::vector<double> eps(x.size());
            for (double& e : eps) e = rng.normal();
            in.set_slice(m, apply_forward_noise_abar(x, abar, eps));
            in.noise[i] = std::move(eps);
        }
    }
    return in;
}

}  // namespace ctrlvdiff
