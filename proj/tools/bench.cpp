// Serial vs OpenMP wall clock for the three hot paths, with a bitwise audit:
// every parallel result must equal the serial one exactly, or the row fails.
#include <omp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "skelrep/config.hpp"

using namespace skelrep;

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct Row {
  std::string name;
  double serial_ms = 0, parallel_ms = 0;
  bool bitwise = false;
};

Row bench_corpus(const PoseSampler& sampler, int records, int threads) {
  Row row{"pose corpus (" + std::to_string(records) + " records)"};
  auto t0 = std::chrono::steady_clock::now();
  auto serial = generate_pose_dataset(sampler, records, 99, CorruptionSpec{}, {}, "", 1);
  row.serial_ms = ms_since(t0);
  t0 = std::chrono::steady_clock::now();
  auto parallel = generate_pose_dataset(sampler, records, 99, CorruptionSpec{}, {}, "", threads);
  row.parallel_ms = ms_since(t0);
  row.bitwise = serial.records.size() == parallel.records.size();
  for (std::size_t i = 0; row.bitwise && i < serial.records.size(); ++i)
    row.bitwise = serial.records[i].corrupt.joints == parallel.records[i].corrupt.joints &&
                  serial.records[i].clean.joints == parallel.records[i].clean.joints;
  return row;
}

Row bench_training(const SkeletonTopology& topo, const PoseDataset& data, int steps, int batch,
                   int threads) {
  Row row{"train " + std::to_string(steps) + " steps (batch " + std::to_string(batch) + ")"};
  DaeConfig mcfg;
  TrainConfig tcfg;
  tcfg.steps = steps;
  tcfg.batch = batch;
  tcfg.seed = 7;
  std::vector<double> serial, parallel;
  for (int pass = 0; pass < 2; ++pass) {
    tcfg.threads = pass == 0 ? 1 : threads;
    ParameterStore store;
    add_dae_params(store, topo, mcfg, 42);
    Trainer trainer(&store, topo, mcfg, tcfg);
    auto t0 = std::chrono::steady_clock::now();
    trainer.run(data);
    (pass == 0 ? row.serial_ms : row.parallel_ms) = ms_since(t0);
    store.copy_flat(pass == 0 ? serial : parallel);
  }
  row.bitwise = same_bits(serial, parallel);
  return row;
}

Row bench_denoise(const SkeletonTopology& topo, const PoseDataset& data, int threads) {
  Row row{"denoise sweep (" + std::to_string(data.records.size()) + " records)"};
  DaeConfig mcfg;
  ParameterStore store;
  add_dae_params(store, topo, mcfg, 42);
  auto t0 = std::chrono::steady_clock::now();
  auto serial = denoise_eval(&store, topo, mcfg, data.records, 1);
  row.serial_ms = ms_since(t0);
  t0 = std::chrono::steady_clock::now();
  auto parallel = denoise_eval(&store, topo, mcfg, data.records, threads);
  row.parallel_ms = ms_since(t0);
  row.bitwise = same_bits({serial.mpjpe_input, serial.mpjpe_recovered},
                          {parallel.mpjpe_input, parallel.mpjpe_recovered});
  return row;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP timing with bitwise equality audit"};
  int threads = omp_get_max_threads();
  int records = 500;
  int steps = 8;
  int batch = 16;
  app.add_option("--threads", threads, "parallel lane width")->check(CLI::PositiveNumber);
  app.add_option("--records", records, "corpus size")->check(CLI::PositiveNumber);
  app.add_option("--steps", steps, "training steps")->check(CLI::PositiveNumber);
  app.add_option("--batch", batch, "training batch size")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  auto sampler = PoseSampler::default_human();
  auto topo = SkeletonTopology::default17();
  std::vector<Row> rows;
  rows.push_back(bench_corpus(sampler, records, threads));
  auto data = generate_pose_dataset(sampler, records, 99, CorruptionSpec{}, {}, "", threads);
  rows.push_back(bench_training(topo, data, steps, batch, threads));
  rows.push_back(bench_denoise(topo, data, threads));

  std::printf("%-34s %11s %11s %8s %8s\n", "kernel", "serial ms", "omp ms", "speedup", "bitwise");
  bool all_ok = true;
  for (const auto& r : rows) {
    double speedup = r.parallel_ms > 0 ? r.serial_ms / r.parallel_ms : 0;
    std::printf("%-34s %11.1f %11.1f %7.2fx %8s\n", r.name.c_str(), r.serial_ms, r.parallel_ms,
                speedup, r.bitwise ? "ok" : "MISMATCH");
    all_ok = all_ok && r.bitwise;
  }
  std::printf("threads: %d\n", threads);
  return all_ok ? 0 : 1;
}
