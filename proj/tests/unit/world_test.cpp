#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ms/world.hpp"

namespace {

using namespace ms;
using namespace ms::world;
using geom::Vec2;

Shape square(double side, double h = 0.04) {
  const double s = side / 2;
  return {{{-s, -s}, {s, -s}, {s, s}, {-s, s}}, h};
}

Shape disc(double diameter, double h = 0.04) {
  auto poly = geom::regular_polygon({0, 0}, diameter / 2, 8);
  return {poly, h};
}

WorldState empty_world(BinConfig cfg = {}) {
  WorldState w;
  w.config = cfg;
  w.rng = Rng(cfg.seed);
  return w;
}

ObjectInstance obj(int id, Shape s, double x, double y, bool target = false) {
  ObjectInstance o;
  o.id = id;
  o.shape = std::move(s);
  o.pose = {x, y, 0.0};
  o.is_target = target;
  return o;
}

void expect_valid(const WorldState& w) {
  int targets = 0;
  for (const auto& o : w.objects) {
    targets += o.is_target;
    EXPECT_GE(o.z_base, 0.0);
    for (const auto& v : o.footprint()) {
      EXPECT_GE(v.x, -w.config.pusher_r - 1e-9);
      EXPECT_LE(v.x, w.config.bin_w + w.config.pusher_r + 1e-9);
      EXPECT_GE(v.y, -w.config.pusher_r - 1e-9);
      EXPECT_LE(v.y, w.config.bin_d + w.config.pusher_r + 1e-9);
    }
  }
  EXPECT_LE(targets, 1);
  for (std::size_t i = 0; i < w.objects.size(); ++i)
    for (std::size_t j = i + 1; j < w.objects.size(); ++j)
      if (share_layer(w.objects[i], w.objects[j]))
        EXPECT_LT(geom::intersection_area(w.objects[i].footprint(), w.objects[j].footprint()), 1e-6)
            << w.objects[i].id << " vs " << w.objects[j].id;
}

TEST(InitHeap, TenObjectsInsideBinOneTarget) {
  const auto w = init_heap(BinConfig{}, 10, 42);
  ASSERT_EQ(w.objects.size(), 10u);
  int targets = 0;
  for (const auto& o : w.objects) {
    targets += o.is_target;
    EXPECT_TRUE(footprint_inside_bin(o.footprint(), w.config, 1e-9));
    EXPECT_NO_THROW(o.shape.validate());
  }
  EXPECT_EQ(targets, 1);
  expect_valid(w);
}

TEST(InitHeap, SameSeedIsByteIdentical) {
  const auto a = init_heap(BinConfig{}, 20, 7);
  const auto b = init_heap(BinConfig{}, 20, 7);
  EXPECT_EQ(serialize(a), serialize(b));
  EXPECT_TRUE(a == b);
  EXPECT_NE(serialize(a), serialize(init_heap(BinConfig{}, 20, 8)));
}

TEST(InitHeap, BenchmarkHeapSizesAreValid) {
  for (int n : {10, 20}) {
    const auto w = init_heap(BinConfig{}, n, 3);
    EXPECT_EQ(static_cast<int>(w.objects.size()), n);
    expect_valid(w);
  }
}

TEST(InitHeap, OverfullBinThrows) {
  BinConfig cfg;
  cfg.bin_w = 0.05;
  cfg.bin_d = 0.05;
  cfg.placement_retries = 20;
  EXPECT_THROW(init_heap(cfg, 40, 1), PlacementError);
}

TEST(InitHeap, StackedObjectsRestOnSupport) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto w = init_heap(BinConfig{}, 20, seed);
    for (const auto& o : w.objects) {
      if (o.z_base == 0.0) continue;
      EXPECT_GE(support_fraction(w, o), w.config.support_frac - 1e-9);
    }
  }
}

TEST(ApplyPush, FreeObjectMovesByLengthMinusGap) {
  auto w = empty_world();
  w.objects.push_back(obj(1, disc(0.05), 0.20, 0.20));
  PushCommand cmd;
  cmd.p_start = {0.12, 0.20};
  cmd.z_push = 0.01;
  cmd.alpha_push = 0.0;
  const auto after = apply_push(w, cmd);
  // contact when the disc edge reaches the object's leftmost vertex
  const double left = 0.20 - 0.025;
  const double gap = left - (0.12 + w.config.pusher_r);
  EXPECT_NEAR(after.objects[0].pose.x - 0.20, 0.10 - gap, 1e-3);
  EXPECT_NEAR(after.objects[0].pose.y, 0.20, 1e-9);
}

TEST(ApplyPush, MissingObjectLeavesPosesUnchanged) {
  auto w = empty_world();
  w.objects.push_back(obj(1, square(0.04), 0.30, 0.30));
  PushCommand cmd;
  cmd.p_start = {0.05, 0.05};
  cmd.z_push = 0.01;
  cmd.alpha_push = 0.0;
  const auto after = apply_push(w, cmd);
  EXPECT_EQ(after.objects[0].pose, w.objects[0].pose);
}

TEST(ApplyPush, PusherAboveObjectDoesNotTouchIt) {
  auto w = empty_world();
  w.objects.push_back(obj(1, square(0.04, 0.02), 0.20, 0.20));
  PushCommand cmd;
  cmd.p_start = {0.12, 0.20};
  cmd.z_push = 0.05;
  cmd.alpha_push = 0.0;
  EXPECT_EQ(apply_push(w, cmd).objects[0].pose, w.objects[0].pose);
}

TEST(ApplyPush, IntoWallDoesNotMove) {
  auto w = empty_world();
  w.objects.push_back(obj(1, square(0.04), 0.40 - 0.02, 0.20));
  PushCommand cmd;
  cmd.p_start = {0.33, 0.20};
  cmd.z_push = 0.01;
  cmd.alpha_push = 0.0;
  const auto after = apply_push(w, cmd);
  EXPECT_NEAR(after.objects[0].pose.x, 0.38, 1e-9);
  for (const auto& v : after.objects[0].footprint()) EXPECT_LE(v.x, 0.40 + 1e-9);
}

TEST(ApplyPush, ChainMatchesFineIntegration) {
  auto w = empty_world();
  w.objects.push_back(obj(1, square(0.04), 0.15, 0.20));
  w.objects.push_back(obj(2, square(0.04), 0.195, 0.205));
  PushCommand cmd;
  cmd.p_start = {0.10, 0.20};
  cmd.z_push = 0.01;
  cmd.alpha_push = 0.0;
  const auto coarse = apply_push(w, cmd);
  auto fine_w = w;
  fine_w.config.substeps = 5000;
  const auto fine = apply_push(fine_w, cmd);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(coarse.objects[i].pose.x, fine.objects[i].pose.x, 2e-3);
    EXPECT_NEAR(coarse.objects[i].pose.y, fine.objects[i].pose.y, 2e-3);
  }
  // both moved forward, the second ahead of the first
  EXPECT_GT(coarse.objects[0].pose.x, 0.15);
  EXPECT_GT(coarse.objects[1].pose.x, 0.195);
}

TEST(ApplyPush, PropertiesOverRandomPushes) {
  Rng rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const auto w = init_heap(BinConfig{}, 10, 100 + trial);
    PushCommand cmd;
    cmd.p_start = {rng.uniform(0.0, 0.4), rng.uniform(0.0, 0.4)};
    cmd.z_push = rng.uniform(0.005, 0.05);
    cmd.alpha_push = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const auto a = apply_push(w, cmd);
    const auto b = apply_push(w, cmd);
    ASSERT_EQ(serialize(a), serialize(b));
    ASSERT_EQ(a.objects.size(), w.objects.size());
    for (std::size_t i = 0; i < w.objects.size(); ++i) {
      EXPECT_EQ(a.objects[i].id, w.objects[i].id);
      const double d = std::hypot(a.objects[i].pose.x - w.objects[i].pose.x, a.objects[i].pose.y - w.objects[i].pose.y);
      EXPECT_LE(d, 0.10 + 1e-3);
    }
    expect_valid(a);
  }
}

TEST(ApplyGrasp, IsolatedDiscSucceeds) {
  auto w = empty_world();
  w.objects.push_back(obj(1, disc(0.05), 0.20, 0.20));
  w.objects.push_back(obj(2, square(0.04), 0.08, 0.08, true));
  GraspCommand g{{0.20, 0.20}, 0.0, 0.07, 1};
  EXPECT_TRUE(check_grasp(w, g).feasible());
  const auto [after, outcome] = apply_grasp(w, g);
  EXPECT_EQ(outcome, GraspOutcome::removed_to_secondary);
  EXPECT_EQ(after.find(1), nullptr);
  ASSERT_EQ(after.secondary_bin_contents.size(), 1u);
  EXPECT_EQ(after.secondary_bin_contents[0], 1);
  EXPECT_FALSE(after.delivered_target);
}

TEST(ApplyGrasp, TargetDeliveryEndsTrial) {
  auto w = empty_world();
  w.objects.push_back(obj(3, disc(0.05), 0.20, 0.20, true));
  const auto [after, outcome] = apply_grasp(w, {{0.20, 0.20}, 0.0, 0.07, 3});
  EXPECT_EQ(outcome, GraspOutcome::delivered_target);
  EXPECT_TRUE(after.delivered_target);
  EXPECT_FALSE(after.target_in_bin());
  EXPECT_TRUE(after.secondary_bin_contents.empty());
}

TEST(ApplyGrasp, BlockedJawsFailAndPerturb) {
  auto w = empty_world();
  w.objects.push_back(obj(1, square(0.04), 0.20, 0.20));
  w.objects.push_back(obj(2, square(0.04), 0.20 - 0.041, 0.20));
  w.objects.push_back(obj(3, square(0.04), 0.20 + 0.041, 0.20));
  GraspCommand g{{0.20, 0.20}, 0.0, 0.06, 1};
  const auto check = check_grasp(w, g);
  EXPECT_EQ(check.block, GraspBlock::jaw_blocked);
  const auto [after, outcome] = apply_grasp(w, g);
  EXPECT_EQ(outcome, GraspOutcome::failed);
  ASSERT_NE(after.find(1), nullptr);
  EXPECT_NE(after.find(1)->pose, w.objects[0].pose);
  EXPECT_EQ(after.objects.size(), 3u);
  // perturbation is seeded
  EXPECT_EQ(serialize(after), serialize(apply_grasp(w, g).first));
}

TEST(ApplyGrasp, TooWideFails) {
  auto w = empty_world();
  w.objects.push_back(obj(1, square(0.09), 0.20, 0.20));
  EXPECT_EQ(check_grasp(w, {{0.20, 0.20}, 0.0, 0.085, 1}).block, GraspBlock::too_wide);
}

TEST(ApplyGrasp, CoveredObjectFails) {
  auto w = empty_world();
  w.objects.push_back(obj(1, square(0.06), 0.20, 0.20));
  // small block resting over the +x contact strip
  auto top = obj(2, square(0.03), 0.215, 0.20);
  top.z_base = w.objects[0].top();
  w.objects.push_back(top);
  EXPECT_EQ(check_grasp(w, {{0.20, 0.20}, 0.0, 0.08, 1}).block, GraspBlock::covered);
  w.objects[1].pose.x = 0.20;
  EXPECT_TRUE(check_grasp(w, {{0.20, 0.20}, 0.0, 0.08, 1}).feasible());
}

TEST(ApplyGrasp, UnknownObjectThrows) {
  auto w = empty_world();
  w.objects.push_back(obj(1, square(0.04), 0.20, 0.20));
  EXPECT_ANY_THROW(apply_grasp(w, {{0.2, 0.2}, 0.0, 0.05, 99}));
}

TEST(Resettle, UnsupportedObjectDropsToFloor) {
  auto w = empty_world();
  w.objects.push_back(obj(1, square(0.06), 0.10, 0.10));
  auto top = obj(2, square(0.05), 0.30, 0.30);
  top.z_base = 0.04;
  w.objects.push_back(top);
  resettle(w);
  EXPECT_EQ(w.find(2)->z_base, 0.0);
  const auto once = serialize(w);
  resettle(w);
  EXPECT_EQ(serialize(w), once);
}

TEST(Serialize, DistinguishesStates) {
  auto a = init_heap(BinConfig{}, 5, 1);
  auto b = a;
  EXPECT_EQ(serialize(a), serialize(b));
  b.objects[0].pose.x = std::nextafter(b.objects[0].pose.x, 1.0);
  EXPECT_NE(serialize(a), serialize(b));
}

TEST(Shape, ValidationRejectsBadShapes) {
  Shape concave{{{0, 0}, {0.05, 0}, {0.01, 0.01}, {0, 0.05}}, 0.03};
  EXPECT_ANY_THROW(concave.validate());
  Shape flat = square(0.04, 0.2);
  EXPECT_ANY_THROW(flat.validate());
  Shape two{{{0, 0}, {0.05, 0}}, 0.03};
  EXPECT_ANY_THROW(two.validate());
  EXPECT_NO_THROW(square(0.04).validate());
}

TEST(Geometry, ExitDistanceAndOverlap) {
  const auto a = geom::oriented_rect({0, 0}, {1, 0}, -1, 1, -1, 1);
  const auto b = geom::translate(a, {1.5, 0});
  EXPECT_TRUE(geom::overlaps(a, b));
  EXPECT_NEAR(geom::exit_distance(a, b, {1, 0}), 0.5, 1e-12);
  EXPECT_NEAR(geom::intersection_area(a, b), 0.5 * 2, 1e-12);
  EXPECT_NEAR(geom::area(a), 4.0, 1e-12);
  EXPECT_TRUE(geom::is_convex_ccw(a));
  EXPECT_FALSE(geom::overlaps(a, geom::translate(a, {2, 0})));
  EXPECT_NEAR(geom::exit_distance(a, geom::translate(a, {3, 0}), {1, 0}), 0.0, 1e-12);
}

TEST(Config, KeyValueRoundTrip) {
  const auto kv = KeyValueConfig::parse("# c\nbin_w = 0.5\nsubsteps=20\nseed = 9\n");
  const auto b = bin_config_from(kv);
  EXPECT_DOUBLE_EQ(b.bin_w, 0.5);
  EXPECT_EQ(b.substeps, 20);
  EXPECT_EQ(b.seed, 9u);
  const auto back = bin_config_from(to_key_values(b));
  EXPECT_EQ(to_key_values(back).canonical(), to_key_values(b).canonical());
  EXPECT_ANY_THROW(bin_config_from(KeyValueConfig::parse("jaw_max = -1\n")));
  EXPECT_ANY_THROW(KeyValueConfig::parse("no equals sign\n"));
}

}  // namespace
