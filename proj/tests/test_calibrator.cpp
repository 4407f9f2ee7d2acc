#include "cellcal/calibrator.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <doctest.h>
#include <filesystem>
#include <set>

#include "cellcal/error.hpp"
#include "cellcal/synth.hpp"
#include "internal/json_util.hpp"
#include "internal/rng.hpp"
#include "support/scenes.hpp"

using namespace cellcal;
namespace fs = std::filesystem;

namespace {

TransformTree treeWithPatterns(const Generated& gen) {
  TransformTree tree = gen.truth.tree;
  for (const auto& [cid, pose] : gen.truth.pattern_poses) {
    tree.setPatternPose(cid, pose);
  }
  return tree;
}

}  // namespace

TEST_CASE("parameter packing round trips exactly") {
  SceneConfig cfg = testsupport::miniScene(4);
  Generated gen = generate(cfg);
  TransformTree tree = treeWithPatterns(gen);
  ParamLayout layout = buildLayout(gen.dataset, tree, {});
  // 2 non-anchored edges + one pattern pose per collection.
  CHECK(layout.size() ==
        6 * (2 + static_cast<int>(gen.dataset.collections.size())));

  Eigen::VectorXd p = packParams(tree, layout);
  TransformTree copy = tree;
  unpackParams(p, layout, copy);
  Eigen::VectorXd p2 = packParams(copy, layout);
  CHECK((p - p2).cwiseAbs().maxCoeff() < 1e-12);
  for (const TreeEdge& e : tree.edges()) {
    const TreeEdge* other = copy.findEdge(e.parent, e.child);
    REQUIRE(other != nullptr);
    CHECK((e.transform.matrix() - other->transform.matrix())
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }
}

TEST_CASE("anchored and frozen layouts") {
  SceneConfig cfg = testsupport::miniScene(3);
  Generated gen = generate(cfg);
  TransformTree tree = treeWithPatterns(gen);

  CalibrateOptions no_anchor;
  no_anchor.anchor = AnchorChoice::none();
  // lidar_a keeps its dataset-level anchored flag.
  ParamLayout l1 = buildLayout(gen.dataset, tree, no_anchor);
  CHECK(l1.edgeSlice("lidar_a_mount") == nullptr);
  CHECK(l1.edgeSlice("rgb_a_mount") != nullptr);

  CalibrateOptions named;
  named.anchor = AnchorChoice::named("rgb_a");
  ParamLayout l2 = buildLayout(gen.dataset, tree, named);
  CHECK(l2.edgeSlice("rgb_a_mount") == nullptr);
  CHECK(l2.edgeSlice("depth_a_mount") != nullptr);

  CalibrateOptions frozen;
  frozen.freeze_sensors = true;
  ParamLayout l3 = buildLayout(gen.dataset, tree, frozen);
  for (const ParamSlice& s : l3.slices) {
    CHECK(s.kind == ParamSlice::Kind::Pattern);
  }

  CalibrateOptions bad;
  bad.anchor = AnchorChoice::named("nope");
  CHECK_THROWS_AS((void)buildLayout(gen.dataset, tree, bad), Error);
}

TEST_CASE("pattern pose initialization recovers ground truth") {
  SceneConfig cfg = testsupport::miniScene(6);
  Generated gen = generate(cfg);
  auto poses = initializePatternPoses(gen.dataset, gen.truth.tree);

  int rgb_checked = 0;
  for (const auto& [cid, estimate] : poses) {
    const Collection* col = gen.dataset.findCollection(cid);
    const RigidTransform& truth = gen.truth.pattern_poses.at(cid);
    if (col->rgb("rgb_a")) {
      // rgb-seeded estimates match to high precision after refinement.
      PoseDelta d = poseDelta(estimate, truth);
      CHECK(d.translation_m < 1e-6);
      CHECK(d.rotation_rad < 1e-6);
      ++rgb_checked;
    } else {
      // Plane-fit estimates agree on the board plane itself (normal up to
      // sign, in-plane placement is canonical, not recovered).
      Eigen::Vector3d n_est = estimate.rotation.col(2);
      Eigen::Vector3d n_gt = truth.rotation.col(2);
      CHECK(std::min((n_est - n_gt).norm(), (n_est + n_gt).norm()) < 1e-6);
    }
  }
  CHECK(rgb_checked >= 3);
}

TEST_CASE("plane-fit initialization for a lidar-only collection") {
  SceneConfig cfg = testsupport::miniScene(6);
  Generated gen = generate(cfg);
  // Strip camera detections so initialization must use the lidar.
  Dataset lidar_only = gen.dataset;
  int kept = 0;
  for (Collection& col : lidar_only.collections) {
    col.detections.erase("rgb_a");
    col.detections.erase("depth_a");
    col.annotations.clear();
    if (col.range("lidar_a")) ++kept;
  }
  REQUIRE(kept >= 3);
  lidar_only.collections.erase(
      std::remove_if(lidar_only.collections.begin(),
                     lidar_only.collections.end(),
                     [](const Collection& c) { return c.detections.empty(); }),
      lidar_only.collections.end());
  lidar_only.refreshDerived();

  auto poses = initializePatternPoses(lidar_only, gen.truth.tree);
  for (const auto& [cid, estimate] : poses) {
    Eigen::Vector3d n_est = estimate.rotation.col(2);
    Eigen::Vector3d n_gt = gen.truth.pattern_poses.at(cid).rotation.col(2);
    double angle = std::acos(std::clamp(std::abs(n_est.dot(n_gt)), 0.0, 1.0));
    CHECK(angle < 1e-6);
  }
}

TEST_CASE("four-corner detections still initialize") {
  SceneConfig cfg = testsupport::miniScene(6);
  Generated gen = generate(cfg);
  Dataset d = gen.dataset;
  int cid = -1;
  const PatternSpec& pat = d.pattern;
  // Keep four spread-out corners (a collinear quadruple cannot fix a
  // homography).
  const std::set<int> keep = {0, pat.nx - 1, pat.nx * (pat.ny - 1),
                              pat.nx * pat.ny - 1};
  for (Collection& col : d.collections) {
    auto it = col.detections.find("rgb_a");
    if (it == col.detections.end()) continue;
    auto& det = std::get<RgbDetection>(it->second);
    if (det.corners.size() != static_cast<std::size_t>(pat.cornerCount()))
      continue;
    std::vector<RgbCorner> subset;
    for (const RgbCorner& c : det.corners) {
      if (keep.count(c.id)) subset.push_back(c);
    }
    if (subset.size() != 4) continue;
    det.corners = subset;
    det.partial = true;
    cid = col.id;
    break;
  }
  REQUIRE(cid >= 0);
  auto poses = initializePatternPoses(d, gen.truth.tree);
  PoseDelta delta = poseDelta(poses.at(cid), gen.truth.pattern_poses.at(cid));
  CHECK(delta.translation_m < 1e-4);
  CHECK(delta.rotation_rad < 1e-4);
}

TEST_CASE("calibrate from ground truth converges immediately") {
  SceneConfig cfg = testsupport::miniScene(5);
  Generated gen = generate(cfg);
  CalibrationResult result = calibrate(gen.dataset, treeWithPatterns(gen));
  CHECK(result.status == SolveStatus::Converged);
  CHECK(result.iterations <= 2);
  CHECK(result.final_cost < 1e-12);
  CHECK(result.final_cost <= result.initial_cost);
}

TEST_CASE("calibrate recovers perturbed extrinsics on noiseless data") {
  SceneConfig cfg = testsupport::miniScene(6);
  cfg.initial_perturbation = PerturbationConfig{0.05, 0.05, 11};
  Generated gen = generate(cfg);

  CalibrationResult result = calibrate(gen.dataset, gen.dataset.tree);
  CHECK(result.status == SolveStatus::Converged);
  // The scalar-norm rgb residual flattens numerically near zero at about
  // (forward step) * fx pixels, which bounds the reachable cost.
  CHECK(result.final_cost < 1e-3);

  for (const SensorSpec& s : gen.dataset.sensors) {
    const TreeEdge* got = result.tree.findEdge(s.calibrated_edge.first,
                                               s.calibrated_edge.second);
    const TreeEdge* want = gen.truth.tree.findEdge(s.calibrated_edge.first,
                                                   s.calibrated_edge.second);
    PoseDelta d = poseDelta(got->transform, want->transform);
    CHECK(d.translation_m < 1e-4);
    CHECK(d.rotation_rad < 1e-4);
  }

  // Accepted costs never increase.
  for (std::size_t i = 1; i < result.cost_history.size(); ++i) {
    CHECK(result.cost_history[i] <= result.cost_history[i - 1]);
  }

  // The anchored edge is bit-identical to its initial value.
  const SensorSpec& anchored = gen.dataset.sensors.front();
  REQUIRE(anchored.anchored);
  const TreeEdge* initial = gen.dataset.tree.findEdge(
      anchored.calibrated_edge.first, anchored.calibrated_edge.second);
  const TreeEdge* final_edge = result.tree.findEdge(
      anchored.calibrated_edge.first, anchored.calibrated_edge.second);
  CHECK(final_edge->transform.rotation == initial->transform.rotation);
  CHECK(final_edge->transform.translation == initial->transform.translation);
}

TEST_CASE("no anchor leaves gauge freedom but fixes relative poses") {
  SceneConfig cfg = testsupport::miniScene(6, /*anchor_lidar=*/false);
  cfg.initial_perturbation = PerturbationConfig{0.04, 0.04, 3};
  Generated gen = generate(cfg);

  CalibrateOptions options;
  options.anchor = AnchorChoice::none();
  CalibrationResult result = calibrate(gen.dataset, gen.dataset.tree, options);
  CHECK(result.final_cost < 1e-3);

  // Relative sensor-to-sensor transforms are gauge invariant; compare the
  // optimized pairings with ground truth.
  auto relative = [&](const TransformTree& tree, const std::string& a,
                      const std::string& b) {
    return compose(tree.chainTo(a).inverse(), tree.chainTo(b));
  };
  for (const SensorSpec& s : gen.dataset.sensors) {
    RigidTransform got =
        relative(result.tree, gen.dataset.sensors[0].data_frame, s.data_frame);
    RigidTransform want =
        relative(gen.truth.tree, gen.dataset.sensors[0].data_frame,
                 s.data_frame);
    PoseDelta d = poseDelta(got, want);
    CHECK(d.translation_m < 2e-4);
    CHECK(d.rotation_rad < 2e-4);
  }
}

TEST_CASE("numeric jacobian matches a central-difference oracle") {
  SceneConfig cfg = testsupport::miniScene(3);
  Generated gen = generate(cfg);
  TransformTree tree = treeWithPatterns(gen);
  // Move off the ground truth so no residual sits at a kink.
  tree = perturbInitial(tree, gen.dataset.sensors, 0.03, 0.03, 5);
  ParamLayout layout = buildLayout(gen.dataset, tree, {});

  Eigen::MatrixXd forward = numericJacobian(gen.dataset, tree, layout, 1e-6);

  // Central-difference oracle at a coarser step.
  TransformTree scratch = tree;
  Eigen::VectorXd p = packParams(tree, layout);
  const double h = 1e-5;
  int checked_cols = 0;
  for (int j = 0; j < layout.size(); j += 4) {  // sample columns
    Eigen::VectorXd hi = p, lo = p;
    hi(j) += h;
    lo(j) -= h;
    unpackParams(hi, layout, scratch);
    Eigen::VectorXd rh = assemble(gen.dataset, scratch).values;
    unpackParams(lo, layout, scratch);
    Eigen::VectorXd rl = assemble(gen.dataset, scratch).values;
    Eigen::VectorXd central = (rh - rl) / (2 * h);
    // Kink detector: the symmetric second difference vanishes like h*f'' on
    // smooth rows but jumps to the slope gap across a crease (min-switch or
    // a norm passing zero), where no derivative exists. Those rows are
    // excluded; everything else must agree tightly.
    unpackParams(p, layout, scratch);
    Eigen::VectorXd r0 = assemble(gen.dataset, scratch).values;
    int smooth = 0;
    for (int i = 0; i < central.size(); ++i) {
      double denom = std::max({1.0, std::abs(central(i)),
                               std::abs(forward(i, j))});
      double crease = std::abs(rh(i) + rl(i) - 2 * r0(i)) / h / denom;
      if (crease > 5e-4) continue;
      ++smooth;
      CHECK(std::abs(forward(i, j) - central(i)) / denom < 1e-4);
    }
    CHECK(smooth > 0.7 * central.size());
    ++checked_cols;
  }
  CHECK(checked_cols >= 8);
}

TEST_CASE("jacobian sparsity: zeros outside dependency blocks") {
  SceneConfig cfg = testsupport::miniScene(3);
  Generated gen = generate(cfg);
  TransformTree tree = treeWithPatterns(gen);
  ParamLayout layout = buildLayout(gen.dataset, tree, {});
  Eigen::MatrixXd jac = numericJacobian(gen.dataset, tree, layout);

  AssembledResiduals res = assemble(gen.dataset, tree);
  for (const BlockSlice& block : res.blocks) {
    const SensorSpec& s = gen.dataset.sensor(block.sensor);
    const ParamSlice* edge = layout.edgeSlice(s.calibrated_edge.second);
    const ParamSlice* pattern = layout.patternSlice(block.collection);
    for (const ParamSlice& slice : layout.slices) {
      if (&slice == edge || &slice == pattern) continue;
      CHECK(jac.block(block.offset, slice.offset, block.length, 6)
                .cwiseAbs()
                .maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("calibration is deterministic") {
  SceneConfig cfg = testsupport::miniScene(4);
  cfg.noise.rgb_pixel_sigma = 0.4;
  cfg.noise.range_sigma = 0.006;
  cfg.noise.depth_sigma = 0.004;
  cfg.initial_perturbation = PerturbationConfig{0.05, 0.05, 2};
  Generated gen = generate(cfg);

  CalibrationResult a = calibrate(gen.dataset, gen.dataset.tree);
  CalibrationResult b = calibrate(gen.dataset, gen.dataset.tree);
  fs::path dir = fs::temp_directory_path() /
                 ("cellcal_calib_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  saveResult(a, dir / "a.json");
  saveResult(b, dir / "b.json");
  CHECK(internal::readFile(dir / "a.json") ==
        internal::readFile(dir / "b.json"));

  CalibrationResult loaded = loadResult(dir / "a.json");
  CHECK(loaded.status == a.status);
  CHECK(loaded.final_cost == a.final_cost);
  CHECK(loaded.iterations == a.iterations);
  CHECK(loaded.pattern_poses.size() == a.pattern_poses.size());
  const TreeEdge* e1 = loaded.tree.findEdge("gantry", "rgb_a_mount");
  const TreeEdge* e2 = a.tree.findEdge("gantry", "rgb_a_mount");
  CHECK(e1->transform.rotation == e2->transform.rotation);
  CHECK(e1->transform.translation == e2->transform.translation);
  fs::remove_all(dir);
}

TEST_CASE("options json round trip") {
  CalibrateOptions options;
  options.anchor = AnchorChoice::named("lidar_1");
  options.max_iters = 77;
  options.weights.range = 250.0;
  CalibrateOptions back =
      calibrateOptionsFromJsonText(calibrateOptionsToJsonText(options));
  CHECK(back.anchor.mode == AnchorMode::Named);
  CHECK(back.anchor.name == "lidar_1");
  CHECK(back.max_iters == 77);
  CHECK(back.weights.range == 250.0);
  CHECK(back.weights.rgb == 1.0);

  CalibrateOptions none = calibrateOptionsFromJsonText("{\"anchor\":\"none\"}");
  CHECK(none.anchor.mode == AnchorMode::None);
}

TEST_CASE("weight scaling scales cost quadratically") {
  SceneConfig cfg = testsupport::miniScene(3);
  cfg.noise.range_sigma = 0.01;  // nonzero range residuals
  Generated gen = generate(cfg);
  TransformTree tree = treeWithPatterns(gen);
  AssembledResiduals res = assemble(gen.dataset, tree);

  ResidualWeights unit{1.0, 1.0};
  double base = res.weightedCost(unit);
  // With unit weights the cost is exactly the sum of squares.
  CHECK(base == doctest::Approx(res.values.squaredNorm()).epsilon(1e-12));

  ResidualWeights scaled{1.0, 3.0};
  double range_part = 0.0;
  for (const BlockSlice& b : res.blocks) {
    if (b.kind != ResidualKind::RgbReprojection) {
      range_part += res.values.segment(b.offset, b.length).squaredNorm();
    }
  }
  double expect = base + (9.0 - 1.0) * range_part;
  CHECK(res.weightedCost(scaled) == doctest::Approx(expect).epsilon(1e-12));
}
