#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ddm2/container.hpp"
#include "ddm2/kspace.hpp"
#include "ddm2/manifest.hpp"
#include "ddm2/phantom.hpp"
#include "ddm2/pipeline.hpp"
#include "ddm2/png.hpp"
#include "ddm2/report.hpp"
#include "ddm2/rng.hpp"
#include "ddm2/sha256.hpp"

namespace fs = std::filesystem;
using namespace ddm2;

namespace {

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::ConfigInvalid:
      return 2;
    case ErrorKind::UnsupportedFormat:
    case ErrorKind::CorruptHeader:
    case ErrorKind::NonFiniteData:
    case ErrorKind::AlreadyNormalized:
    case ErrorKind::AlreadyCalibrated:
    case ErrorKind::TooFewVolumes:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::LockHeld:
    case ErrorKind::HashMismatch:
    case ErrorKind::MaskMismatch:
    case ErrorKind::EmptySample:
      return 3;
    case ErrorKind::DivergedLoss:
    case ErrorKind::SpecMismatch:
    case ErrorKind::MissingCondition:
    case ErrorKind::UnexpectedCondition:
      return 4;
    case ErrorKind::StateOutOfRange:
    case ErrorKind::NonFiniteState:
    case ErrorKind::ZeroSigma:
    case ErrorKind::EmptyTrace:
    case ErrorKind::DegenerateBackground:
      return 5;
    default:
      return 1;
  }
}

void emit_error(ErrorKind kind, const std::string& message) {
  nlohmann::json err = {{"error", {{"kind", error_kind_name(kind)}, {"message", message}}}};
  std::cerr << err.dump() << std::endl;
}

struct SimulateOptions {
  std::string workdir;
  std::vector<int> shape{32, 32, 8, 6};
  double sigma = 0.08;
  int snr_levels = 1;
  std::string mode = "gaussian";
  int coils = 1;
  uint64_t seed = 1234;
};

void run_simulate(const SimulateOptions& o) {
  if (o.shape.size() != 4) throw Error(ErrorKind::ConfigInvalid, "--shape needs w,h,d,l");
  fs::path out = fs::path(o.workdir) / "sim";
  fs::create_directories(out);
  nlohmann::json manifest;
  manifest["mode"] = o.mode;
  manifest["levels"] = nlohmann::json::array();

  for (int level = 0; level < o.snr_levels; level++) {
    double sigma = o.sigma * double(level + 1) / double(o.snr_levels);
    PhantomSpec spec;
    spec.w = o.shape[0];
    spec.h = o.shape[1];
    spec.d = o.shape[2];
    spec.l = o.shape[3];
    spec.seed = mix_seed(o.seed, uint64_t(level));
    spec.sigma = o.mode == "kspace" ? 0.0 : sigma;
    PhantomPair pair = make_phantom(spec);

    if (o.mode == "kspace") {
      for (int vol = 0; vol < spec.l; vol++)
        for (int z = 0; z < spec.d; z++) {
          auto res = inject_kspace_noise(pair.clean.slice(vol, z), o.coils, sigma,
                                         mix_seed(spec.seed, uint64_t(vol), uint64_t(z)));
          pair.noisy.set_slice(vol, z, res.magnitude);
        }
    } else if (o.mode != "gaussian") {
      throw Error(ErrorKind::ConfigInvalid, "--mode must be gaussian or kspace");
    }

    fs::path dir = out / ("level_" + std::to_string(level));
    fs::create_directories(dir);
    write_container((dir / "clean.vol").string(), pair.clean, {{"content", "phantom_clean"}});
    write_container((dir / "noisy.vol").string(), pair.noisy, {{"content", "phantom_noisy"}});
    save_masks((dir / "masks.vol").string(), pair.masks);
    manifest["levels"].push_back(
        {{"sigma", sigma},
         {"dir", "level_" + std::to_string(level)},
         {"clean_sha256", sha256_file_hex((dir / "clean.vol").string())},
         {"noisy_sha256", sha256_file_hex((dir / "noisy.vol").string())}});
  }
  std::ofstream mf(out / "manifest.json", std::ios::trunc);
  mf << manifest.dump(2) << '\n';
  std::cout << "wrote " << o.snr_levels << " dataset level(s) under " << out.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ddm2: three-stage self-supervised diffusion-model denoising for 4D MRI"};
  app.require_subcommand(1);

  std::string config_path, workdir, input, output, format = "raw_container";
  bool no_resume = false;
  double sigma = -1.0, p_norm = 1.0;
  std::string metric = "sqrt_beta";
  uint64_t seed = 1234;
  int sample_rows = 32, sample_cols = 32;
  SimulateOptions sim;

  auto add_cfg = [&](CLI::App* cmd, bool need_workdir = true) {
    cmd->add_option("--config", config_path, "pipeline config JSON")->required();
    if (need_workdir) cmd->add_option("--workdir", workdir, "run directory")->required();
  };

  CLI::App* c_run = app.add_subcommand("run", "execute the full pipeline");
  add_cfg(c_run);
  c_run->add_flag("--no-resume", no_resume, "ignore existing artifacts");

  CLI::App* c_ingest = app.add_subcommand("ingest", "convert an input into the raw container");
  c_ingest->add_option("--input", input)->required();
  c_ingest->add_option("--format", format, "raw_container|nifti1");
  c_ingest->add_option("--output", output)->required();

  CLI::App* c_s1 = app.add_subcommand("stage1-train", "run through Stage I");
  add_cfg(c_s1);
  CLI::App* c_s3 = app.add_subcommand("stage3-train", "run through Stage III");
  add_cfg(c_s3);
  CLI::App* c_dn = app.add_subcommand("denoise", "run through conditional denoising");
  add_cfg(c_dn);
  CLI::App* c_ev = app.add_subcommand("eval", "run through metric evaluation");
  add_cfg(c_ev);

  CLI::App* c_s2 = app.add_subcommand("stage2-match", "state matching");
  c_s2->add_option("--config", config_path, "pipeline config JSON (schedule defaults if absent)");
  c_s2->add_option("--workdir", workdir, "run directory (runs the stage2 pipeline step)");
  c_s2->add_option("--sigma", sigma, "match a given sigma directly and print t_star");
  c_s2->add_option("--p", p_norm, "norm order");
  c_s2->add_option("--metric", metric, "sqrt_beta|sqrt_one_minus_alphabar");

  CLI::App* c_sample = app.add_subcommand("sample", "unconditional generation");
  add_cfg(c_sample);
  c_sample->add_option("--seed", seed);
  c_sample->add_option("--rows", sample_rows);
  c_sample->add_option("--cols", sample_cols);
  c_sample->add_option("--output", output, "output PNG path")->required();

  CLI::App* c_sim = app.add_subcommand("simulate", "generate ground-truthed phantom datasets");
  c_sim->add_option("--workdir", sim.workdir)->required();
  c_sim->add_option("--shape", sim.shape, "w,h,d,l")->expected(4);
  c_sim->add_option("--sigma", sim.sigma, "largest noise level");
  c_sim->add_option("--snr-levels", sim.snr_levels, "number of noise levels");
  c_sim->add_option("--mode", sim.mode, "gaussian|kspace");
  c_sim->add_option("--coils", sim.coils);
  c_sim->add_option("--seed", sim.seed);

  CLI::App* c_rep = app.add_subcommand("report", "render figures and summaries for a run");
  add_cfg(c_rep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (c_run->parsed()) {
      run_pipeline(PipelineConfig::load(config_path), workdir, !no_resume);
      std::cout << "pipeline complete; manifest at "
                << (fs::path(workdir) / paths::manifest).string() << "\n";
    } else if (c_ingest->parsed()) {
      VolumeFormat fmt = format == "nifti1" ? VolumeFormat::nifti1 : VolumeFormat::raw_container;
      Volume4D v = ingest(input, fmt);
      v.validate();
      write_container(output, v);
      std::cout << "ingested " << v.voxel_count() << " voxels -> " << output << "\n";
    } else if (c_s1->parsed()) {
      run_pipeline(PipelineConfig::load(config_path), workdir, !no_resume,
                   PipelineStage::stage1);
    } else if (c_s3->parsed()) {
      run_pipeline(PipelineConfig::load(config_path), workdir, !no_resume,
                   PipelineStage::stage3);
    } else if (c_dn->parsed()) {
      run_pipeline(PipelineConfig::load(config_path), workdir, !no_resume,
                   PipelineStage::denoise);
    } else if (c_ev->parsed()) {
      run_pipeline(PipelineConfig::load(config_path), workdir, !no_resume, PipelineStage::eval);
    } else if (c_s2->parsed()) {
      if (sigma >= 0.0) {
        PipelineConfig cfg;
        if (!config_path.empty()) cfg = PipelineConfig::load(config_path);
        NoiseSchedule sched = cfg.build_schedule();
        NoiseModelFit fit;
        fit.sigma = sigma;
        MatchMetric mm = metric == "sqrt_one_minus_alphabar"
                             ? MatchMetric::sqrt_one_minus_alphabar
                             : MatchMetric::sqrt_beta;
        StateMatch m = match_state(fit, sched, p_norm, mm);
        std::cout << "t_star=" << m.t_star << "\n";
        if (!m.warning.empty()) std::cerr << "warning: " << m.warning << "\n";
      } else if (!workdir.empty() && !config_path.empty()) {
        run_pipeline(PipelineConfig::load(config_path), workdir, true, PipelineStage::stage2);
        std::ifstream mf(fs::path(workdir) / paths::match_json);
        nlohmann::json mj = nlohmann::json::parse(mf);
        for (const auto& m : mj.at("matches"))
          std::cout << "volume=" << m.value("volume_index", -1)
                    << " sigma=" << m.at("sigma").get<double>()
                    << " t_star=" << m.at("t_star").get<int>() << "\n";
      } else {
        throw Error(ErrorKind::ConfigInvalid,
                    "stage2-match needs --sigma or (--config and --workdir)");
      }
    } else if (c_sample->parsed()) {
      PipelineConfig cfg = PipelineConfig::load(config_path);
      NetDenoiser F = NetDenoiser::load((fs::path(workdir) / paths::f_ckpt).string());
      NoiseSchedule sched = cfg.build_schedule();
      Image img = sample_unconditional(F, sched, sample_rows, sample_cols, seed, cfg.mean_mode);
      write_png_image(output, img);
      std::cout << "wrote " << output << "\n";
    } else if (c_sim->parsed()) {
      run_simulate(sim);
    } else if (c_rep->parsed()) {
      write_report(PipelineConfig::load(config_path), workdir);
      std::cout << "report written under " << (fs::path(workdir) / "report").string() << "\n";
    }
  } catch (const Error& e) {
    emit_error(e.kind(), e.what());
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    emit_error(ErrorKind::Internal, e.what());
    return 1;
  }
  return 0;
}
