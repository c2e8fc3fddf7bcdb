#include "support.hpp"

#include "ampn/checkpoint.hpp"
#include "ampn/pyramid.hpp"
#include "ampn/synthdata.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace ampn;
using ampn::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ampn_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SynthOptions small() {
  SynthOptions o;
  o.height = 64;
  o.width = 64;
  return o;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("text round trip") {
    ModelConfig c = ModelConfig::desk();
    c.use_dual_attention = false;
    c.loss_weights.perceptual = 0.5;
    c.train.learning_rate = 3.25e-5;
    c.extractor_weights = "some/file.ampn";
    const ModelConfig back = ModelConfig::from_text(c.to_text());
    CHECK(back.to_text() == c.to_text());
    CHECK(back.architecture_matches(c));
    CHECK_FALSE(back.architecture_matches(ModelConfig::desk()));
  }

  TEST_CASE("rejects unknown keys and bad values") {
    CHECK_THROWS_AS(ModelConfig::from_text("no_such_key = 3\n"), ConfigError);
    CHECK_THROWS_AS(ModelConfig::from_text("pyramid_levels = two\n"), ConfigError);
    CHECK_THROWS_AS(ModelConfig::from_text("just words\n"), ConfigError);
    ModelConfig c = ModelConfig::desk();
    c.pyramid_levels = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(ModelConfig::desk().variant("bogus"), ConfigError);
    const ModelConfig comments = ModelConfig::from_text("# header\nbase_width = 24  # trailing\n\n");
    CHECK(comments.base_width == 24);
  }

  TEST_CASE("hyperparameter defaults") {
    const ModelConfig d = ModelConfig::desk();
    CHECK(d.loss_weights == LossWeights{10.0, 2.0, 1.0});
    CHECK(d.train.learning_rate == 2e-4);
    CHECK(d.train.optimizer == "adam");
    CHECK(d.pyramid_levels == 2);
    const ModelConfig p = ModelConfig::paper_scale();
    CHECK(p.train.batch_size == 8);
    CHECK(p.train.epochs == 500);
    CHECK(p.train.image_height == 1024);
    CHECK(p.train.image_width == 1536);
    CHECK(d.size_divisor() == 32);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("archive round trip and corruption") {
    Archive a;
    a.kind = "test";
    a.meta["k"] = "v";
    a.tensors.emplace_back("t", random_tensor(Shape{1, 2, 3, 4}, 1));
    const std::string bytes = a.serialize();
    const Archive b = Archive::parse(bytes);
    CHECK(b.kind == "test");
    CHECK(b.meta_at("k") == "v");
    CHECK((b.find("t")->array() == a.tensors[0].second.array()).all());
    CHECK(b.find("missing") == nullptr);
    CHECK_THROWS_AS(Archive::parse(bytes.substr(0, bytes.size() - 3)), ArchiveError);
    CHECK_THROWS_AS(Archive::parse(bytes + "x"), ArchiveError);
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(Archive::parse(bad), ArchiveError);
    CHECK_THROWS_AS(Archive::load("/nonexistent/file.ampn"), IoError);
  }

  TEST_CASE("FNV-1a reference values") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(hash_hex(0xaf63dc4c8601ec8cULL) == "af63dc4c8601ec8c");
  }

  TEST_CASE("weights and optimizer state survive bit-exactly") {
    const fs::path dir = scratch("ckpt");
    const AmpnModel<float> model(ModelConfig::desk());
    Checkpoint c = Checkpoint::from_model(model, 17);
    AdamState s;
    s.step = 17;
    for (const auto& [name, p] : model.parameters()) {
      s.m.push_back(random_tensor(p.shape(), s.m.size()));
      s.v.push_back(random_tensor(p.shape(), 1000 + s.v.size()));
    }
    c.optimizer = s;
    c.save(dir / "a.ampn");
    const Checkpoint back = Checkpoint::load(dir / "a.ampn");
    CHECK(back.training_step == 17);
    REQUIRE(back.parameters.size() == c.parameters.size());
    for (size_t i = 0; i < c.parameters.size(); ++i) {
      CHECK(back.parameters[i].name == c.parameters[i].name);
      CHECK(back.parameters[i].group == c.parameters[i].group);
      CHECK((back.parameters[i].value.array() == c.parameters[i].value.array()).all());
    }
    REQUIRE(back.optimizer.has_value());
    CHECK(back.optimizer->step == 17);
    for (size_t i = 0; i < s.m.size(); ++i) {
      CHECK((back.optimizer->m[i].array() == s.m[i].array()).all());
      CHECK((back.optimizer->v[i].array() == s.v[i].array()).all());
    }
    const TensorF x = random_tensor(Shape{1, 3, 64, 96}, 3);
    CHECK((back.instantiate().forward(x).b0.value().array() == model.forward(x).b0.value().array()).all());
    // a second save of the same contents produces the same file
    back.save(dir / "b.ampn");
    CHECK(checkpoint_hash(dir / "a.ampn") == checkpoint_hash(dir / "b.ampn"));
    CHECK(checkpoint_hash(dir / "a.ampn").size() == 16);
  }

  TEST_CASE("architecture mismatches are rejected") {
    const fs::path dir = scratch("ckpt_mismatch");
    Checkpoint::from_model(AmpnModel<float>(ModelConfig::desk())).save(dir / "full.ampn");
    CHECK_THROWS_AS(Checkpoint::load(dir / "full.ampn", ModelConfig::desk().variant("wo_att")), CheckpointMismatch);
    ModelConfig wider = ModelConfig::desk();
    wider.base_width = 24;
    CHECK_THROWS_AS(Checkpoint::load(dir / "full.ampn", wider), CheckpointMismatch);
    AmpnModel<float> other(ModelConfig::desk().variant("no_g2"));
    CHECK_THROWS_AS(Checkpoint::load(dir / "full.ampn").apply_to(other), CheckpointMismatch);
    CHECK_NOTHROW(Checkpoint::load(dir / "full.ampn", ModelConfig::desk()));
    Archive extractor;
    extractor.kind = "extractor";
    extractor.save(dir / "x.ampn");
    CHECK_THROWS_AS(Checkpoint::load(dir / "x.ampn"), ArchiveError);
  }
}

TEST_SUITE("synthdata") {
  TEST_CASE("no blur means target equals input") {
    SynthOptions o = small();
    o.sigma_lo = o.sigma_hi = 0.0;
    const auto s = generate_sample(5, o);
    CHECK((s.input.array() == s.target.array()).all());
    CHECK((gaussian_blur(s.input, 0.0).array() == s.input.array()).all());
  }

  TEST_CASE("deterministic samples with binary regions") {
    const auto a = generate_sample(9, small()), b = generate_sample(9, small()), c = generate_sample(10, small());
    CHECK((a.input.array() == b.input.array()).all());
    CHECK((a.target.array() == b.target.array()).all());
    CHECK_FALSE((a.input.array() == c.input.array()).all());
    CHECK(((a.gt_region.array() == 0.0f) || (a.gt_region.array() == 1.0f)).all());
    CHECK(a.gt_region.array().sum() > 0.0f);
    CHECK(a.gt_region.array().sum() < 64.0f * 64.0f);
    CHECK(a.blur_sigma >= 2.0);
    CHECK(a.blur_sigma <= 4.0);
    CHECK(sample_seed(1, 2) != sample_seed(2, 1));
  }

  TEST_CASE("the sharp region is copied exactly and the rest is blurred") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto s = generate_sample(seed, small());
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 64; ++y)
          for (int x = 0; x < 64; ++x)
            if (s.gt_region(0, 0, y, x) == 1.0f) REQUIRE(s.input(0, c, y, x) == s.target(0, c, y, x));
      TensorF outside = s.gt_region;
      outside.array() = 1.0f - outside.array();
      CHECK(highfreq_energy(s.target, outside) < 0.5 * highfreq_energy(s.input, outside));
    }
  }

  TEST_CASE("split sizes") {
    CHECK(split_point(10, 0.8) == 8);
    CHECK(split_point(4694, 4400.0 / 4694.0) == 4400);
    CHECK(split_point(288, 256.0 / 288.0) == 256);
    CHECK_THROWS(split_point(10, 0.01));
    CHECK_THROWS(split_point(10, 1.0));
    const auto split = make_dataset(10, 3, 0.8, small());
    CHECK(split.train.size() == 8);
    CHECK(split.eval.size() == 2);
    std::set<std::string> names;
    for (size_t i = 0; i < 8; ++i) names.insert(split.train.get(i).name);
    for (size_t i = 0; i < 2; ++i) CHECK(names.insert(split.eval.get(i).name).second);
  }

  TEST_CASE("written datasets load back") {
    const fs::path root = scratch("synth");
    write_dataset(root, 5, 4, 0.6, small());
    const PairDataset train = load_split(root, "train", 32);
    const PairDataset eval = load_split(root, "eval", 32);
    CHECK(train.size() == 3);
    CHECK(eval.size() == 2);
    const auto direct = make_dataset(5, 4, 0.6, small());
    const ImagePair loaded = eval.get(1), original = direct.eval.get(1);
    CHECK(ampn::testing::max_abs_diff(loaded.input, original.input) <= 1.0 / 510.0 + 1e-6);
    REQUIRE(loaded.gt_region.has_value());
    CHECK((loaded.gt_region->array() == original.gt_region->array()).all());
    CHECK(fs::exists(root / "eval" / "gt_mask" / "00004.png"));
  }

  TEST_CASE("paired directories and resizing") {
    const fs::path root = scratch("paired");
    fs::create_directories(root / "original");
    fs::create_directories(root / "bokeh");
    for (int i = 0; i < 4; ++i) {
      const std::string name = "img" + std::to_string(i) + ".png";
      save_image(ImageTensor(random_tensor(Shape{1, 3, 40, 70}, i)), root / "original" / name);
      save_image(ImageTensor(random_tensor(Shape{1, 3, 40, 70}, 10 + i)), root / "bokeh" / name);
    }
    const auto split = load_paired_directory(root, 0.75, 32);
    CHECK(split.train.size() == 3);
    CHECK(split.eval.size() == 1);
    CHECK(split.train.get(0).input.shape() == Shape{1, 3, 32, 64});
    CHECK(nearest_valid_size(40, 70, 32) == std::pair{32, 64});
    CHECK(nearest_valid_size(10, 10, 32) == std::pair{32, 32});
    CHECK(to_rgb(TensorF(Shape{1, 1, 4, 4}, 0.5f)).shape() == Shape{1, 3, 4, 4});
  }
}
