#include "ctrlvdiff/cli.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "ctrlvdiff/config.hpp"
#include "ctrlvdiff/diffusion.hpp"
#include "ctrlvdiff/metrics.hpp"
#include "ctrlvdiff/png_grid.hpp"
#include "ctrlvdiff/sampler.hpp"
#include "ctrlvdiff/scenegen.hpp"

namespace ctrlvdiff {

namespace {

namespace fs = std::filesystem;

/// Options every subcommand accepts.
struct CommonArgs {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::string out;
    CLI::Option* out_opt = nullptr;
};

void add_common(CLI::App* app, CommonArgs& a, const std::string& default_out) {
    a.out = default_out;
    app->add_option("--config", a.config, "INI config file")->check(CLI::ExistingFile);
    app->add_option("--set", a.sets, "Override, section.key=value (repeatable)");
    app->add_option("--seed", a.seed, "Global seed (default: $CTRLVDIFF_SEED or 0)");
    a.out_opt = app->add_option("--out", a.out, "Output directory")->capture_default_str();
}

class RunLog {
public:
    RunLog(const fs::path& dir, std::ostream& echo) : file_(dir / "run.log", std::ios::app), echo_(echo) {
        if (!file_) throw RuntimeFailure("cannot open " + (dir / "run.log").string());
    }

    void line(const std::string& msg) {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&now, &tm);
        file_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << msg << '\n';
        file_.flush();
        echo_ << msg << '\n';
    }

private:
    std::ofstream file_;
    std::ostream& echo_;
};

/// Merges defaults, file and overrides, then writes config.echo before any work.
RunConfig prepare_run(const std::string& command, const CommonArgs& a,
                      const std::vector<std::pair<std::string, std::string>>& flag_settings) {
    RunConfig cfg = RunConfig::defaults();
    if (!a.config.empty()) cfg.load_file(a.config);
    for (const auto& [k, v] : flag_settings) cfg.set(k, v);
    for (const auto& s : a.sets) cfg.apply_override(s);
    if (a.seed) cfg.set("seeds.seed", std::to_string(*a.seed));
    fs::create_directories(a.out);
    std::ofstream echo(fs::path(a.out) / "config.echo", std::ios::trunc);
    if (!echo) throw RuntimeFailure("cannot write config.echo under " + a.out);
    echo << "# " << command << '\n' << cfg.echo();
    return cfg;
}

/// Splits a clip directory path into (root, clip id).
std::pair<fs::path, std::string> split_clip_path(const std::string& p) {
    fs::path path = fs::path(p).lexically_normal();
    if (path.filename().empty()) path = path.parent_path();
    require(!path.filename().empty(), "not a clip directory: " + p);
    fs::path root = path.parent_path();
    if (root.empty()) root = ".";
    return {root, path.filename().string()};
}

std::vector<double> parse_csv_doubles(const std::string& text, std::size_t expect, const std::string& what) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(tok, &used));
            require(used == tok.size(), "");
        } catch (const std::exception&) {
            throw ValidationError(what + ": '" + text + "' is not a comma-separated list of numbers");
        }
    }
    require(expect == 0 || v.size() == expect, what + ": expected " + std::to_string(expect) + " values");
    return v;
}

ClipRecord output_record(const std::string& id, const std::string& caption, const ModalityMap& tensors,
                         std::uint64_t seed, const std::string& tag) {
    require(!tensors.empty(), "nothing to write");
    ClipRecord rec;
    rec.clip_id = id;
    rec.caption = caption;
    rec.tensors = tensors;
    const Shape& s = tensors.begin()->second.shape;
    rec.meta.frames = s.frames;
    rec.meta.height = s.height;
    rec.meta.width = s.width;
    rec.meta.seed = seed;
    rec.meta.tags = {tag};
    return rec;
}

// ---- subcommands ----------------------------------------------------------

struct GenDataArgs {
    CommonArgs common;
    int clips = 0;
    std::optional<int> frames, height, width;
};

int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
    std::vector<std::pair<std::string, std::string>> flags;
    if (a.frames) flags.emplace_back("data.frames", std::to_string(*a.frames));
    if (a.height) flags.emplace_back("data.height", std::to_string(*a.height));
    if (a.width) flags.emplace_back("data.width", std::to_string(*a.width));
    const RunConfig cfg = prepare_run("gen-data", a.common, flags);
    RunLog log(a.common.out, out);
    require(a.clips >= 1, "gen-data: --clips must be at least 1");
    const RenderConfig rc = render_config_from(cfg);
    const int frames = cfg.get_int("data.frames");
    require(frames >= 1, "gen-data: data.frames must be at least 1");
    const std::uint64_t seed = cfg.get_u64("seeds.seed");
    for (int i = 0; i < a.clips; ++i) {
        const std::uint64_t clip_seed = mix_seed(seed, static_cast<std::uint64_t>(i));
        GeneratedClip g = generate_clip(clip_seed, frames, rc);
        std::ostringstream id;
        id << "clip-" << std::setw(4) << std::setfill('0') << i;
        ClipRecord rec = output_record(id.str(), g.caption, g.modalities, clip_seed, std::string(name_of(g.trajectory.pattern)));
        rec.meta.scene_hash = g.scene.hash();
        write_clip(rec, a.common.out, WriteOptions{true, false});
        log.line("wrote " + rec.clip_id + ": " + g.caption);
    }
    const Manifest man = build_manifest(a.common.out,
                                        {cfg.get_double("data.train_fraction"), cfg.get_double("data.val_fraction"),
                                         cfg.get_double("data.test_fraction")},
                                        seed);
    log.line("manifest: " + std::to_string(man.ids(Split::train).size()) + " train, " +
             std::to_string(man.ids(Split::val).size()) + " val, " + std::to_string(man.ids(Split::test).size()) +
             " test");
    return 0;
}

struct TrainArgs {
    CommonArgs common;
    std::string stage;
    std::string data;
    std::string pool;
    std::string init;
    std::string resume;
    std::optional<int> stop_after;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    const RunConfig cfg = prepare_run("train", a.common, {});
    RunLog log(a.common.out, out);
    const Stage stage = parse_stage(a.stage);
    const TrainConfig tc = train_config_from(cfg);
    TrainInputs in;
    in.data_root = a.data;
    in.pool_root = a.pool;
    in.out_dir = a.common.out;
    if (!a.init.empty()) in.init = a.init;
    if (!a.resume.empty()) in.resume = a.resume;
    in.stop_after = a.stop_after;
    log.line("train stage " + std::string(name_of(stage)) + " for " + std::to_string(tc.steps_for(stage)) +
             " steps on " + a.data);
    const int every = std::max(1, tc.steps_for(stage) / 20);
    const TrainResult r = train(tc, stage, in, [&](const StepLog& s) {
        if (s.step % every == 0 || s.step == 1) {
            std::ostringstream os;
            os << "step " << s.step << " loss " << std::setprecision(6) << s.loss.total << " lr " << s.lr;
            log.line(os.str());
        }
    });
    if (r.survivors >= 0) log.line("self-augmentation kept " + std::to_string(r.survivors) + " pool clips");
    log.line(std::string(r.completed ? "completed" : "stopped") + "; checkpoint " + r.checkpoint.string());
    return 0;
}

struct GenerateArgs {
    CommonArgs common;
    std::string ckpt;
    std::string request;
    std::string clip;
    std::string conditions;
    std::string targets;
    std::optional<std::string> caption;
    std::optional<int> steps;
    std::optional<int> frames;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
    // Request file first, then flags on top.
    std::map<std::string, std::string> req_kv;
    std::map<Modality, std::string> cond_paths;
    if (!a.request.empty()) {
        std::ifstream f(a.request);
        if (!f) throw ValidationError("cannot open request file " + a.request);
        std::string line, section;
        while (std::getline(f, line)) {
            const auto b = line.find_first_not_of(" \t\r");
            if (b == std::string::npos || line[b] == '#' || line[b] == ';') continue;
            line = line.substr(b);
            while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
            if (line.front() == '[') {
                section = line.substr(1, line.find(']') - 1);
                continue;
            }
            const auto eq = line.find('=');
            require(eq != std::string::npos, "request file: malformed line '" + line + "'");
            std::string k = line.substr(0, eq), v = line.substr(eq + 1);
            while (!k.empty() && (k.back() == ' ' || k.back() == '\t')) k.pop_back();
            v.erase(0, v.find_first_not_of(" \t"));
            if (section == "conditions") {
                cond_paths[parse_modality(k)] = v;
            } else {
                require(section == "request", "request file: unknown section [" + section + "]");
                req_kv[k] = v;
            }
        }
    }
    CommonArgs common = a.common;
    if (req_kv.count("out") && common.out_opt->count() == 0) common.out = req_kv["out"];
    const RunConfig cfg = prepare_run("generate", common, {});
    RunLog log(common.out, out);

    auto pick = [&](const std::string& flag, const char* key) {
        if (!flag.empty()) return flag;
        auto it = req_kv.find(key);
        return it == req_kv.end() ? std::string() : it->second;
    };
    const std::string clip = pick(a.clip, "clip");
    const std::string cond_list = pick(a.conditions, "conditions");
    const std::string target_list = pick(a.targets, "targets");
    require(!target_list.empty(), "generate: --targets is required");

    GenerationRequest req;
    req.targets = parse_modality_list(target_list);
    req.steps = a.steps ? *a.steps : (req_kv.count("steps") ? std::stoi(req_kv["steps"]) : 50);
    req.frames = a.frames ? *a.frames : (req_kv.count("frames") ? std::stoi(req_kv["frames"]) : 0);
    req.seed = req_kv.count("seed") && !a.common.seed ? std::stoull(req_kv["seed"]) : cfg.get_u64("seeds.seed");

    std::string caption;
    std::string out_id = "generated";
    if (!cond_list.empty()) {
        require(!clip.empty(), "generate: --conditions needs --clip to read them from");
        const auto [root, id] = split_clip_path(clip);
        const std::vector<Modality> ms = parse_modality_list(cond_list);
        const ClipRecord src = read_clip(root, id, ms);
        for (Modality m : ms) req.conditions.emplace(m, src.get(m));
        caption = src.caption;
        out_id = id;
    }
    for (const auto& [m, p] : cond_paths) {
        const auto [root, id] = split_clip_path(p);
        const ClipRecord src = read_clip(root, id, {m});
        req.conditions.insert_or_assign(m, src.get(m));
        if (caption.empty()) caption = src.caption;
    }
    if (a.caption) caption = *a.caption;
    else if (req_kv.count("caption")) caption = req_kv["caption"];
    req.caption = caption;

    const Model model = load_model(a.ckpt);
    log.line("generate " + target_list + " from " + std::to_string(req.conditions.size()) + " conditions, " +
             std::to_string(req.steps) + " steps");
    const GenerationResult res = generate(model, req);
    const fs::path out_root = common.out;
    ClipRecord rec = output_record(out_id, caption.empty() ? "(no caption)" : caption, res.native, req.seed, "generated");
    write_clip(rec, out_root, WriteOptions{true, true});
    log.line("wrote " + (out_root / out_id).string());
    return 0;
}

struct UnderstandArgs {
    CommonArgs common;
    std::string ckpt;
    std::string clip;
    std::string data;
    std::string split;
    int steps = 50;
};

int cmd_understand(const UnderstandArgs& a, std::ostream& out) {
    const RunConfig cfg = prepare_run("understand", a.common, {});
    RunLog log(a.common.out, out);
    require(a.clip.empty() != a.data.empty(), "understand: give exactly one of --clip or --data");
    std::vector<std::pair<fs::path, std::string>> todo;
    if (!a.clip.empty()) {
        todo.push_back(split_clip_path(a.clip));
    } else {
        std::vector<std::string> ids = a.split.empty() ? list_clips(a.data) : read_manifest(a.data).ids([&] {
            if (a.split == "train") return Split::train;
            if (a.split == "val") return Split::val;
            require(a.split == "test", "understand: --split must be train, val or test");
            return Split::test;
        }());
        for (const auto& id : ids) todo.emplace_back(a.data, id);
    }
    const Model model = load_model(a.ckpt);
    const std::uint64_t seed = cfg.get_u64("seeds.seed");
    for (std::size_t i = 0; i < todo.size(); ++i) {
        const auto& [root, id] = todo[i];
        const ClipRecord src = read_clip(root, id, {Modality::rgb});
        const std::uint64_t s = mix_seed(seed, i);
        GenerationResult res = understand(model, src.get(Modality::rgb), src.caption, a.steps, s);
        res.native.emplace(Modality::rgb, src.get(Modality::rgb));
        write_clip(output_record(id, src.caption, res.native, s, "understood"), a.common.out, WriteOptions{true, false});
        log.line("understood " + id);
    }
    return 0;
}

struct EditArgs {
    CommonArgs common;
    std::string ckpt;
    std::string clip;
    std::string kind;
    std::string caption;
    std::optional<int> mask_instance;
    std::string albedo;
    std::optional<double> roughness;
    std::optional<double> metallic;
    std::vector<std::string> stamps;
    std::string stamp_albedo;
    bool regen_depth = false;
    int steps = 50;
};

int cmd_edit(const EditArgs& a, std::ostream& out) {
    const RunConfig cfg = prepare_run("edit", a.common, {});
    RunLog log(a.common.out, out);
    const auto [root, id] = split_clip_path(a.clip);
    const ClipRecord clip = read_clip(root, id);
    EditRequest req;
    req.kind = parse_edit_kind(a.kind);
    req.steps = a.steps;
    req.seed = cfg.get_u64("seeds.seed");
    EditPayload& p = req.payload;
    p.caption = a.caption;
    if (!a.albedo.empty()) {
        const auto v = parse_csv_doubles(a.albedo, 3, "--albedo");
        p.albedo = Rgb{static_cast<float>(v[0]), static_cast<float>(v[1]), static_cast<float>(v[2])};
    }
    p.roughness = a.roughness;
    p.metallic = a.metallic;
    if (a.mask_instance) {
        require(clip.has(Modality::segmentation), "edit: --mask-instance needs the clip's segmentation");
        const auto& seg = clip.get(Modality::segmentation);
        p.mask.resize(seg.data.size());
        for (std::size_t i = 0; i < seg.data.size(); ++i) p.mask[i] = static_cast<int>(seg.data[i]) == *a.mask_instance;
    }
    for (const auto& s : a.stamps) {
        const auto v = parse_csv_doubles(s, 3, "--stamp");
        InsertStamp st;
        st.cx = v[0], st.cy = v[1], st.radius = v[2];
        if (!a.stamp_albedo.empty()) {
            const auto c = parse_csv_doubles(a.stamp_albedo, 3, "--stamp-albedo");
            st.albedo = Rgb{static_cast<float>(c[0]), static_cast<float>(c[1]), static_cast<float>(c[2])};
        }
        p.stamps.push_back(st);
    }
    p.regenerate_depth = a.regen_depth;

    const Model model = load_model(a.ckpt);
    log.line("edit " + std::string(name_of(req.kind)) + " on " + id);
    const GenerationResult res = edit_and_rerender(model, clip, req);
    const std::string out_id = id + "-" + std::string(name_of(req.kind));
    write_clip(output_record(out_id, p.caption.empty() ? clip.caption : p.caption, res.native, req.seed, "edited"),
               a.common.out, WriteOptions{true, true});
    log.line("wrote " + (fs::path(a.common.out) / out_id).string());
    return 0;
}

struct EvalArgs {
    CommonArgs common;
    std::string pred;
    std::string gt;
    std::string metrics;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    prepare_run("eval", a.common, {});
    RunLog log(a.common.out, out);
    std::vector<std::string> groups;
    if (a.metrics.empty()) {
        groups = metric_groups();
    } else {
        std::stringstream ss(a.metrics);
        std::string g;
        while (std::getline(ss, g, ','))
            if (!g.empty()) groups.push_back(g);
    }
    const auto ids = list_clips(a.pred);
    require(!ids.empty(), "eval: no clips under " + a.pred);
    std::ofstream csv(fs::path(a.common.out) / "eval.csv", std::ios::trunc);
    if (!csv) throw RuntimeFailure("cannot write eval.csv");
    csv << "clip_id,metric,value\n" << std::setprecision(10);
    std::map<std::string, std::pair<double, int>> summary;
    std::vector<std::string> order;
    for (const auto& id : ids) {
        require(fs::exists(fs::path(a.gt) / id), "eval: no ground truth for clip " + id);
        const ClipRecord pred = read_clip(a.pred, id);
        const ClipRecord gt = read_clip(a.gt, id);
        for (const auto& [name, value] : evaluate_clip(pred, gt, groups)) {
            csv << id << ',' << name << ',' << value << '\n';
            if (!summary.count(name)) order.push_back(name);
            summary[name].first += value;
            summary[name].second += 1;
        }
    }
    std::ostringstream table;
    table << std::left << std::setw(24) << "metric" << "mean\n";
    for (const auto& name : order)
        table << std::left << std::setw(24) << name << std::setprecision(6)
              << summary[name].first / summary[name].second << '\n';
    out << table.str();
    log.line("evaluated " + std::to_string(ids.size()) + " clips");
    return 0;
}

struct InspectArgs {
    CommonArgs common;
    std::string clip;
    std::string grid;
};

int cmd_inspect(const InspectArgs& a, std::ostream& out) {
    prepare_run("inspect", a.common, {});
    RunLog log(a.common.out, out);
    const auto [root, id] = split_clip_path(a.clip);
    const fs::path dir = root / id;
    ClipMeta meta;
    std::string caption;
    try {
        meta = read_clip_meta(dir);
        std::ifstream cf(dir / "caption.txt");
        std::getline(cf, caption);
    } catch (const ValidationError& e) {
        throw RuntimeFailure(std::string("cannot read clip: ") + e.what());
    }
    std::ostringstream os;
    os << "clip " << id << "  [T=" << meta.frames << " H=" << meta.height << " W=" << meta.width << "]  fps "
       << meta.fps << "  seed " << meta.seed << '\n';
    os << "caption: " << caption << '\n';
    os << "tags:";
    for (const auto& t : meta.tags) os << ' ' << t;
    os << '\n';
    ClipRecord rec;
    rec.clip_id = id;
    rec.caption = caption;
    rec.meta = meta;
    for (Modality m : kAllModalities) {
        const fs::path f = dir / (std::string(name_of(m)) + ".tensor");
        os << std::left << std::setw(14) << name_of(m);
        if (!fs::exists(f)) {
            os << "ABSENT\n";
            continue;
        }
        ModalityTensor t;
        try {
            t = read_tensor_file(f);
        } catch (const std::exception& e) {
            throw RuntimeFailure("cannot read " + f.string() + ": " + e.what());
        }
        double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0;
        for (float v : t.data) lo = std::min<double>(lo, v), hi = std::max<double>(hi, v), sum += v;
        os << to_string(t.shape) << std::setprecision(4) << "  min " << lo << "  max " << hi << "  mean "
           << (t.data.empty() ? 0.0 : sum / t.data.size()) << '\n';
        rec.tensors.emplace(m, std::move(t));
    }
    out << os.str();
    if (!a.grid.empty()) {
        write_png(a.grid, contact_sheet(rec));
        log.line("wrote grid " + a.grid);
    }
    log.line("inspected " + id);
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multimodal video diffusion toolkit: data generation, training, generation, understanding, editing"};
    app.require_subcommand(1);

    GenDataArgs gd;
    auto* c_gen = app.add_subcommand("gen-data", "Render synthetic clips with all eight modalities");
    add_common(c_gen, gd.common, "data");
    c_gen->add_option("--clips", gd.clips, "Number of clips")->required();
    c_gen->add_option("--frames", gd.frames, "Frames per clip");
    c_gen->add_option("--height", gd.height, "Frame height");
    c_gen->add_option("--width", gd.width, "Frame width");

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Run one training stage");
    add_common(c_train, tr.common, "run");
    c_train->add_option("--stage", tr.stage, "I, II or III")->required();
    c_train->add_option("--data", tr.data, "Labelled clip directory")->required();
    c_train->add_option("--pool", tr.pool, "Unlabelled pool directory (stage III)");
    c_train->add_option("--init", tr.init, "Previous stage checkpoint (default: <out>/stage-<prev>.ckpt)");
    c_train->add_option("--resume", tr.resume, "Resume an interrupted checkpoint of this stage");
    c_train->add_option("--stop-after", tr.stop_after, "Stop after this many steps");

    GenerateArgs ge;
    auto* c_generate = app.add_subcommand("generate", "Generate target modalities from any condition subset");
    add_common(c_generate, ge.common, "generated");
    c_generate->add_option("--ckpt", ge.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    c_generate->add_option("--request", ge.request, "Request file")->check(CLI::ExistingFile);
    c_generate->add_option("--clip", ge.clip, "Clip directory providing the conditions");
    c_generate->add_option("--conditions", ge.conditions, "Condition modalities, comma-separated");
    c_generate->add_option("--targets", ge.targets, "Target modalities, comma-separated");
    c_generate->add_option("--caption", ge.caption, "Caption text");
    c_generate->add_option("--steps", ge.steps, "Sampling steps");
    c_generate->add_option("--frames", ge.frames, "Frames when there are no conditions");

    UnderstandArgs un;
    auto* c_understand = app.add_subcommand("understand", "Estimate the seven non-rgb modalities from rgb");
    add_common(c_understand, un.common, "understood");
    c_understand->add_option("--ckpt", un.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    c_understand->add_option("--clip", un.clip, "Single clip directory");
    c_understand->add_option("--data", un.data, "Directory of clips");
    c_understand->add_option("--split", un.split, "Manifest split to process (train, val, test)");
    c_understand->add_option("--steps", un.steps, "Sampling steps")->capture_default_str();

    EditArgs ed;
    auto* c_edit = app.add_subcommand("edit", "Edit conditioning layers and re-render rgb");
    add_common(c_edit, ed.common, "edited");
    c_edit->add_option("--ckpt", ed.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    c_edit->add_option("--clip", ed.clip, "Clip directory")->required();
    c_edit->add_option("--kind", ed.kind, "relight, material or insert")->required();
    c_edit->add_option("--caption", ed.caption, "Replacement caption (relight)");
    c_edit->add_option("--mask-instance", ed.mask_instance, "Segmentation id selecting the material mask");
    c_edit->add_option("--albedo", ed.albedo, "Albedo override r,g,b");
    c_edit->add_option("--roughness", ed.roughness, "Roughness override");
    c_edit->add_option("--metallic", ed.metallic, "Metallic override");
    c_edit->add_option("--stamp", ed.stamps, "Disk stamp cx,cy,radius in pixels (repeatable)");
    c_edit->add_option("--stamp-albedo", ed.stamp_albedo, "Stamp albedo r,g,b");
    c_edit->add_flag("--regen-depth", ed.regen_depth, "Regenerate depth along with rgb (insert)");
    c_edit->add_option("--steps", ed.steps, "Sampling steps")->capture_default_str();

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "Score predicted clips against ground truth");
    add_common(c_eval, ev.common, "eval");
    c_eval->add_option("--pred", ev.pred, "Predicted clip directory")->required();
    c_eval->add_option("--gt", ev.gt, "Ground-truth clip directory")->required();
    c_eval->add_option("--metrics", ev.metrics, "Metric groups: depth,normal,seg,rgb,albedo,temporal");

    InspectArgs in;
    auto* c_inspect = app.add_subcommand("inspect", "Summarise a clip and optionally export a contact sheet");
    add_common(c_inspect, in.common, ".");
    c_inspect->add_option("clip", in.clip, "Clip directory")->required();
    c_inspect->add_option("--export-grid", in.grid, "Write a modalities x frames PNG");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (c_gen->parsed()) return cmd_gen_data(gd, out);
        if (c_train->parsed()) return cmd_train(tr, out);
        if (c_generate->parsed()) return cmd_generate(ge, out);
        if (c_understand->parsed()) return cmd_understand(un, out);
        if (c_edit->parsed()) return cmd_edit(ed, out);
        if (c_eval->parsed()) return cmd_eval(ev, out);
        if (c_inspect->parsed()) return cmd_inspect(in, out);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "failure: " << e.what() << '\n';
        return 2;
    }
    err << app.help();
    return 1;
}

}  // namespace ctrlvdiff
