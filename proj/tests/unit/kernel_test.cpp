// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "chunksched/error.hpp"
#include "chunksched/fixtures.hpp"

namespace chunksched {
namespace {

std::string fixture(const std::string& name) {
  std::ifstream in(std::string(CHUNKSCHED_FIXTURE_DIR) + "/" + name);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

TileProgram grid(int64_t tiles_m, int64_t tiles_n, int sms) {
  GemmShape g;
  g.m = 128 * tiles_m;
  g.n = 128 * tiles_n;
  TileProgram p = gemm_program(g);
  p.sm_count = sms;
  return p;
}

TEST(Annotations, ParsesKernelFixture) {
  const ParsedKernel k = parse_annotations(fixture("ag_gemm.py"));
  ASSERT_FALSE(k.empty);
  const TileProgram& p = k.program;
  ASSERT_EQ(p.axes.size(), 3u);
  EXPECT_EQ(p.axis("M").block_symbol, "BLOCK_M");
  EXPECT_EQ(p.axis("N").block_symbol, "BLOCK_N");
  EXPECT_EQ(p.axis("K").block_symbol, "BLOCK_K");
  EXPECT_EQ(p.axis("M").pid_var, "pid_m");
  EXPECT_EQ(p.axis("N").pid_var, "pid_n");
  EXPECT_FALSE(p.axis("K").spatial());
  EXPECT_EQ(p.scheduler, SchedulerKind::persistent);
  EXPECT_EQ(p.spatial, (std::vector<std::string>{"M", "N"}));
  EXPECT_EQ(p.sm_count, 132);
  EXPECT_EQ(p.tile_count(), 8 * 4);
  EXPECT_DOUBLE_EQ(p.flops_per_tile(), 2.0 * 128 * 128 * 256);
}

TEST(Annotations, NoDirectives) {
  const ParsedKernel k = parse_annotations("M = 4\nprint('hi')\n");
  EXPECT_TRUE(k.empty);
  ASSERT_EQ(k.diagnostics.size(), 1u);
  EXPECT_EQ(k.diagnostics[0], "no @sy directives found");
}

TEST(Annotations, UnclosedDispatch) {
  const std::string src =
      "M = 256\nBM = 128\n# @sy.axis_count M block=BM\n# @sy.tile_id flat\n"
      "# @sy.dispatch begin\n# @sy.pid_map M=pid_m\n";
  try {
    parse_annotations(src);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("unclosed dispatch region"), std::string::npos);
    EXPECT_NE(what.find("line 5"), std::string::npos);
  }
}

TEST(Annotations, EverySpatialAxisNeedsADirective) {
  const std::string src =
      "M = 256\nN = 256\nBM = 128\n# @sy.axis_count M block=BM\n"
      "# @sy.tile_id persistent\n# @sy.dispatch begin\n"
      "# @sy.pid_map M=pid_m N=pid_n\n# @sy.dispatch end\n";
  EXPECT_THROW(parse_annotations(src), ParseError);
}

TEST(Annotations, PrintParseRoundTrip) {
  const TileProgram p = parse_annotations(fixture("ag_gemm.py")).program;
  EXPECT_EQ(parse_annotations(print_annotations(p)).program, p);
  GemmShape g;
  g.m = 384, g.n = 200, g.k = 96, g.bn = 64, g.elem_bytes = 4;
  TileProgram q = gemm_program(g);
  q.flops_override = 12345;
  EXPECT_EQ(parse_annotations(print_annotations(q)).program, q);
}

TEST(Waves, RowMajorFourByFour) {
  const TileProgram p = grid(4, 4, 4);
  const WaveSchedule w = default_tile_order(p);
  const auto waves = w.waves();
  ASSERT_EQ(waves.size(), 4u);
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(waves[k], (std::vector<int64_t>{4 * k, 4 * k + 1, 4 * k + 2, 4 * k + 3}));
  }
}

TEST(Waves, SingleTile) {
  const TileProgram p = grid(1, 1, 132);
  const auto waves = default_tile_order(p).waves();
  ASSERT_EQ(waves.size(), 1u);
  EXPECT_EQ(waves[0], std::vector<int64_t>{0});
}

TEST(Waves, ThousandTwentyFourTiles) {
  const WaveSchedule w = default_tile_order(grid(32, 32, 132));
  EXPECT_EQ(w.wave_count(), 8);
  EXPECT_EQ(w.waves().back().size(), 100u);
  std::vector<int64_t> sorted = w.order;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int64_t> iota(1024);
  std::iota(iota.begin(), iota.end(), 0);
  EXPECT_EQ(sorted, iota);
}

TEST(Utilization, ClosedForm) {
  const auto util = [](int64_t tm, int64_t tn) {
    const TileProgram p = grid(tm, tn, 132);
    return sm_utilization(p, default_tile_order(p));
  };
  EXPECT_NEAR(util(32, 32), 1024.0 / 1056.0, 1e-12);
  EXPECT_NEAR(util(12, 11), 1.0, 1e-12);
  EXPECT_NEAR(util(8, 8), 64.0 / 132.0, 1e-12);
}

TEST(Utilization, Staircase) {
  // Within one wave count the fraction falls with the tile count, and it
  // drops across every wave-count boundary.
  double prev = 0;
  int64_t prev_waves = 1;
  for (int64_t tiles = 1; tiles <= 600; ++tiles) {
    const TileProgram p = grid(tiles, 1, 132);
    const WaveSchedule w = default_tile_order(p);
    const double u = sm_utilization(p, w);
    if (w.wave_count() == prev_waves) {
      EXPECT_GE(u, prev) << tiles;
    } else {
      EXPECT_LT(u, prev) << tiles;
    }
    prev = u;
    prev_waves = w.wave_count();
  }
}

TEST(Tiles, RegionsInBounds) {
  GemmShape g;
  g.m = 300, g.n = 260, g.k = 70;
  const TileProgram p = gemm_program(g);
  for (int64_t t : default_tile_order(p).order) {
    for (const TileAccess& a : p.accesses) {
      const Region r = p.region(a, t);
      TensorSpec spec;
      for (const TensorSpec& s : p.tensors()) {
        if (s.id == a.tensor_id) spec = s;
      }
      EXPECT_TRUE(check_region(r, spec).empty()) << to_string(r);
    }
    EXPECT_EQ(p.tile_id(p.coords(t)), t);
  }
}

TEST(Tiles, WithTileConfig) {
  const TileProgram p = with_tile_config(gemm_program({}), 64, 0, 32);
  EXPECT_EQ(p.axis("M").block, 64);
  EXPECT_EQ(p.axis("N").block, 128);
  EXPECT_EQ(p.axis("K").block, 32);
  EXPECT_EQ(p.tile_count(), 4 * 2);
}

}  // namespace
}  // namespace chunksched
