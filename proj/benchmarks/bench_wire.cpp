// Copyright 2026 The nodeprim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <benchmark/benchmark.h>

#include <random>

#include "nodeprim/wire.hpp"

using namespace nodeprim;

namespace {

wire::Bytes random_bytes(std::size_t n) {
  std::mt19937_64 rng(n);
  wire::Bytes b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng());
  return b;
}

void BM_EncodeFrame(benchmark::State& state) {
  const auto payload = random_bytes(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(wire::encode_frame("human_behaviour", payload));
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncodeFrame)->Range(16, 1 << 20);

void BM_DecodeFrame(benchmark::State& state) {
  const auto bytes = wire::encode_frame("human_behaviour", random_bytes(static_cast<std::size_t>(state.range(0))));
  for (auto _ : state) {
    wire::SpanSource src(bytes);
    benchmark::DoNotOptimize(wire::decode_frame(src));
  }
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DecodeFrame)->Range(16, 1 << 20);

wire::Document sample_document(int fields) {
  wire::Document d = wire::Document::object();
  for (int i = 0; i < fields; ++i) {
    d["field_" + std::to_string(i)] = {{"label", "karate"}, {"score", 0.5 + i}, {"tags", {1, 2, 3}}};
  }
  return d;
}

void BM_EncodeDocument(benchmark::State& state) {
  const wire::Payload doc = sample_document(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(wire::encode_payload(doc));
}
BENCHMARK(BM_EncodeDocument)->Range(1, 256);

void BM_DecodeDocument(benchmark::State& state) {
  const auto bytes = wire::encode_payload(sample_document(static_cast<int>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(wire::decode_payload(bytes, wire::Encoding::Json));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(bytes.size()));
}
BENCHMARK(BM_DecodeDocument)->Range(1, 256);

}  // namespace

BENCHMARK_MAIN();
