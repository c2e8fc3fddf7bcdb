#include "support.hpp"

#include "ampn/model.hpp"

#include <doctest.h>

#include <set>

using namespace ampn;
using ampn::testing::max_abs_diff;
using ampn::testing::random_tensor;

namespace {

ModelConfig desk_variant(const std::string& name) { return ModelConfig::desk().variant(name); }

std::set<const void*> graph_nodes(const VarF& root) {
  std::set<const void*> seen;
  visit_graph<float>(root, [&seen](const Node<float>& n) { seen.insert(&n); });
  return seen;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("intermediate shapes for a two-level pyramid") {
    const AmpnModel<float> model(ModelConfig::desk());
    const auto out = model.forward(random_tensor(Shape{2, 3, 64, 96}, 1));
    CHECK(out.pyramid.residual.shape() == Shape{2, 3, 16, 24});
    CHECK(out.mgbg.mask.shape() == Shape{2, 1, 16, 24});
    CHECK(out.mgbg.intermediate.shape() == Shape{2, 3, 16, 24});
    CHECK(out.mgbg.bokeh.shape() == Shape{2, 3, 16, 24});
    CHECK(out.refinement.refinement_mask.shape() == Shape{2, 3, 32, 48});
    CHECK(out.refinement.modulated[0].shape() == Shape{2, 3, 64, 96});
    CHECK(out.refinement.modulated[1].shape() == Shape{2, 3, 32, 48});
    CHECK(out.refinement.b_int.shape() == Shape{2, 3, 64, 96});
    CHECK(out.blend_mask.shape() == Shape{2, 1, 64, 96});
    CHECK(out.b0.value().array().minCoeff() >= 0.0f);
    CHECK(out.b0.value().array().maxCoeff() <= 1.0f);
    const auto& m = out.mgbg.mask.value().array();
    CHECK((m.minCoeff() >= 0.0f && m.maxCoeff() <= 1.0f));
  }

  TEST_CASE("input contract") {
    const AmpnModel<float> model(ModelConfig::desk());
    CHECK_THROWS_AS(model.forward(random_tensor(Shape{1, 3, 48, 96}, 1)), ShapeError);
    CHECK_THROWS_AS(model.forward(random_tensor(Shape{1, 1, 64, 96}, 1)), ShapeError);
    ForwardOptions bad;
    bad.external_mask = TensorF(Shape{1, 1, 32, 96}, 1.0f);
    CHECK_THROWS_AS(model.forward(random_tensor(Shape{1, 3, 64, 96}, 1), bad), ShapeError);
    const AmpnModel<float> no_g1(desk_variant("no_g1"));
    CHECK_THROWS_AS(no_g1.forward(random_tensor(Shape{1, 3, 64, 96}, 1)), std::invalid_argument);
  }

  TEST_CASE("without G2 the low-resolution bokeh is the low-frequency image") {
    const AmpnModel<float> model(desk_variant("no_g2"));
    const auto out = model.forward(random_tensor(Shape{1, 3, 64, 96}, 2));
    CHECK((out.mgbg.bokeh.value().array() == out.pyramid.residual.array()).all());
    CHECK(model.parameter_groups().count("g2") == 0);
  }

  TEST_CASE("an external mask replaces the predicted one") {
    const AmpnModel<float> model(ModelConfig::desk());
    const TensorF x = random_tensor(Shape{1, 3, 64, 96}, 3);
    const auto base = model.forward(x);
    const VarF i_l(base.pyramid.residual);
    const VarF m(random_tensor(Shape{1, 1, 16, 24}, 4));
    const auto direct = model.mgbg().generate_bokeh(i_l, m);
    const auto routed = model.mgbg().forward(i_l, m);
    CHECK((direct.bokeh.value().array() == routed.bokeh.value().array()).all());
    CHECK((routed.mask.value().array() == m.value().array()).all());

    ForwardOptions opt;
    opt.external_mask = TensorF(Shape{1, 1, 64, 96}, 0.25f);
    const auto ext = model.forward(x, opt);
    CHECK_FALSE(ext.predicted_mask.defined());
    CHECK((ext.mgbg.mask.value().array() - 0.25f).abs().maxCoeff() < 1e-6f);
  }

  TEST_CASE("ablations remove parameters") {
    const auto full = parameter_count(ModelConfig::desk());
    CHECK(parameter_count(desk_variant("no_g1")) < full);
    CHECK(parameter_count(desk_variant("no_g2")) < full);
    CHECK(parameter_count(desk_variant("wo_ref")) < full);
    CHECK(parameter_count(desk_variant("wo_att")) < full);
    const auto groups = AmpnModel<float>(ModelConfig::desk()).parameter_groups();
    for (const char* g : {"g1", "g2", "lpr_refiner", "lpr_finetune", "attention.g2_input", "attention.g2_output",
                          "attention.lpr_input", "attention.lpr_output"})
      CHECK_MESSAGE(groups.count(g) == 1, g);
  }

  TEST_CASE("the mask generator receives gradient through the final image") {
    const AmpnModel<float> model(ModelConfig::desk());
    const auto out = model.forward(random_tensor(Shape{1, 3, 64, 96}, 5));
    backward(mean(out.b0));
    double g = 0;
    for (const auto& [name, p] : model.parameter_groups().at("g1")) g += p.grad().array().abs().sum();
    CHECK(g > 0.0);
  }

  TEST_CASE("refinement off and G2 off reconstruct the input") {
    ModelConfig cfg = desk_variant("wo_ref");
    cfg.use_g2 = false;
    const AmpnModel<float> model(cfg);
    const TensorF x = random_tensor(Shape{1, 3, 64, 96}, 6);
    const auto out = model.forward(x);
    CHECK(max_abs_diff(out.refinement.b_int.value(), x) <= 1e-5);
    CHECK_FALSE(out.refinement.refinement_mask.defined());
    CHECK(model.parameter_groups().count("lpr_refiner") == 0);
  }

  TEST_CASE("refinement off keeps the raw bands") {
    const AmpnModel<float> model(desk_variant("wo_ref"));
    const TensorF x = random_tensor(Shape{1, 3, 64, 96}, 7);
    const auto out = model.forward(x);
    for (int k = 0; k < 2; ++k)
      CHECK((out.refinement.modulated[k].value().array() == out.pyramid.highfreq[k].array()).all());
    const TensorF expected = pyramid_expand(pyramid_expand(out.mgbg.bokeh.value()));
    TensorF sum = expected;
    sum.array() += pyramid_expand(out.pyramid.highfreq[1]).array() + out.pyramid.highfreq[0].array();
    CHECK(max_abs_diff(out.refinement.b_int.value(), sum) < 1e-5);
  }

  TEST_CASE("refiner weights take part in the graph only when enabled") {
    const AmpnModel<float> model(ModelConfig::desk());
    const auto out = model.forward(random_tensor(Shape{1, 3, 64, 96}, 8));
    const auto nodes = graph_nodes(out.b0);
    for (const auto& [name, p] : model.parameter_groups().at("lpr_refiner"))
      CHECK_MESSAGE(nodes.count(p.node().get()) == 1, name);
    const AmpnModel<float> plain(desk_variant("wo_ref"));
    const auto plain_out = plain.forward(random_tensor(Shape{1, 3, 64, 96}, 8));
    // every trainable leaf reachable from the output belongs to the generators
    std::set<const void*> generator_leaves;
    for (const auto& [name, p] : plain.parameters()) generator_leaves.insert(p.node().get());
    int trainable = 0;
    visit_graph<float>(plain_out.b0, [&](const Node<float>& n) {
      if (n.requires_grad && n.parents.empty()) {
        ++trainable;
        CHECK(generator_leaves.count(&n) == 1);
      }
    });
    CHECK(trainable == static_cast<int>(plain.parameters().size()));
    CHECK(plain.parameter_groups().count("lpr_finetune") == 0);
  }

  TEST_CASE("pyramid depth one to three") {
    for (int levels : {1, 2, 3}) {
      ModelConfig cfg = ModelConfig::desk();
      cfg.pyramid_levels = levels;
      const AmpnModel<float> model(cfg);
      const int d = cfg.size_divisor();
      const int h = d * std::max(1, 64 / d), w = d * std::max(1, 96 / d);
      const auto out = model.forward(random_tensor(Shape{1, 3, h, w}, 9));
      CHECK(out.b0.shape() == Shape{1, 3, h, w});
      CHECK(static_cast<int>(out.refinement.modulated.size()) == levels);
      CHECK(out.mgbg.mask.shape() == Shape{1, 1, h >> levels, w >> levels});
    }
  }

  TEST_CASE("models are reproducible from the init seed") {
    const TensorF x = random_tensor(Shape{1, 3, 64, 96}, 10);
    const auto a = AmpnModel<float>(ModelConfig::desk()).forward(x);
    const auto b = AmpnModel<float>(ModelConfig::desk()).forward(x);
    CHECK((a.b0.value().array() == b.b0.value().array()).all());
  }
}

TEST_SUITE("blend") {
  TEST_CASE("hand value") {
    const VarF i0(TensorF(Shape{1, 3, 2, 2}, 0.8f)), bint(TensorF(Shape{1, 3, 2, 2}, 0.2f));
    const VarF m(TensorF(Shape{1, 1, 2, 2}, 0.35f));
    CHECK(blend_final(i0, bint, m).value()(0, 1, 1, 0) == doctest::Approx(0.41f));
  }

  TEST_CASE("identities, clamping and convexity") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const VarF i0(random_tensor(Shape{1, 3, 8, 8}, seed));
      const VarF bint(random_tensor(Shape{1, 3, 8, 8}, seed + 100, -0.3, 1.3));
      const TensorF one(Shape{1, 1, 8, 8}, 1.0f), zero(Shape{1, 1, 8, 8}, 0.0f);
      CHECK((blend_final(i0, bint, VarF(one)).value().array() == i0.value().array()).all());
      const TensorF clamped_b = ImageTensor::clamped(bint.value()).tensor();
      CHECK((blend_final(i0, bint, VarF(zero)).value().array() == clamped_b.array()).all());
      const TensorF m = random_tensor(Shape{1, 1, 8, 8}, seed + 200);
      const TensorF y = blend_final(i0, VarF(clamped_b), VarF(m)).value();
      const Eigen::ArrayXf lo = i0.value().array().min(clamped_b.array());
      const Eigen::ArrayXf hi = i0.value().array().max(clamped_b.array());
      CHECK(((y.array() >= lo) && (y.array() <= hi)).all());
    }
  }

  TEST_CASE("low-resolution masks are upsampled") {
    const VarF i0(TensorF(Shape{1, 3, 8, 8}, 1.0f)), bint(TensorF(Shape{1, 3, 8, 8}, 0.0f));
    const VarF m(TensorF(Shape{1, 1, 2, 2}, 0.5f));
    const TensorF y = blend_final(i0, bint, m).value();
    CHECK(y.shape() == Shape{1, 3, 8, 8});
    CHECK((y.array() - 0.5f).abs().maxCoeff() < 1e-6f);
  }
}
