#include "helpers.hpp"

#include "tgeat/ccc.hpp"
#include "tgeat/checkpoint.hpp"
#include "tgeat/nn/model.hpp"

#include <doctest.h>

#include <fstream>

using namespace tgeat;
using namespace tgeat::nn;
using testing::error_kind;

namespace {

std::vector<Samples> random_waves(int n, std::size_t base, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<float> g;
  std::vector<Samples> w(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i].resize(base + 16 * i);
    for (auto& x : w[i]) x = g(rng);
  }
  return w;
}

ModelConfig fused_config() {
  ModelConfig c = testing::tiny_model();
  c.fusion = Fusion::text;
  c.text_dim = 5;
  c.env_classifier = true;
  c.n_environments = 3;
  return c;
}

struct Problem {
  std::vector<Samples> waves = random_waves(4, 96, 3);
  std::vector<Vector<double>> text;
  std::vector<ModelInput<double>> inputs;
  Matrix<double> target;
  Matrix<double> logit_weights;

  Problem() {
    Rng rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 4; ++i) {
      Vector<double> t(5);
      for (auto& v : t) v = u(rng);
      text.push_back(t);
    }
    for (int i = 0; i < 4; ++i) inputs.push_back({waves[static_cast<std::size_t>(i)], &text[static_cast<std::size_t>(i)]});
    target.resize(4, 3);
    logit_weights.resize(4, 3);
    for (auto& v : target.reshaped()) v = u(rng);
    for (auto& v : logit_weights.reshaped()) v = u(rng);
  }

  // CCC loss plus a linear functional of the environment logits.
  double loss(const SerModel<double>& m) const {
    const auto out = m.forward(inputs);
    return ccc_loss<double>(out.predictions, target, nullptr) + (out.env_logits.array() * logit_weights.array()).sum();
  }

  std::vector<Vector<double>> analytic(SerModel<double>& m) const {
    typename SerModel<double>::BatchCache cache;
    const auto out = m.forward(inputs, nullptr, &cache, true);
    Matrix<double> dpred;
    ccc_loss(out.predictions, target, &dpred);
    m.zero_grad();
    return m.backward(cache, dpred, &logit_weights, true);
  }
};

}  // namespace

TEST_CASE("config validation and conv geometry") {
  ModelConfig c = testing::tiny_model();
  CHECK_NOTHROW(c.validate());
  CHECK(c.min_input_length() == 16);
  CHECK(c.frames_for(16) == 1);
  CHECK(c.frames_for(100) == 6);
  CHECK(c.frames_for(15) == 0);
  CHECK(ModelConfig{}.min_input_length() == 4 * 4 * 2 * 2);

  c.n_heads = 3;
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::config);
  c = testing::tiny_model();
  c.conv.back().channels = 6;
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::config);
  c = testing::tiny_model();
  c.head_dropout = 1.0;
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::config);

  CHECK(model_config_from_json(to_json(fused_config())) == fused_config());
}

TEST_CASE("analytic gradients match central differences") {
  Problem pb;
  SerModel<double> m(fused_config(), 7);
  m.grl().active = false;  // the numeric loss has no reversal
  const auto text_grads = pb.analytic(m);

  const double h = 1e-6;
  double worst = 0.0;
  for (auto* p : m.parameters()) {
    for (Eigen::Index k = 0; k < p->size(); ++k) {
      double& v = p->value.data()[k];
      const double orig = v;
      v = orig + h;
      const double up = pb.loss(m);
      v = orig - h;
      const double down = pb.loss(m);
      v = orig;
      const double num = (up - down) / (2 * h);
      const double err = std::abs(num - p->grad.data()[k]) / std::max(1.0, std::abs(num));
      worst = std::max(worst, err);
    }
  }
  CHECK(worst < 1e-6);

  worst = 0.0;
  for (std::size_t s = 0; s < pb.text.size(); ++s) {
    for (Eigen::Index k = 0; k < 5; ++k) {
      const double orig = pb.text[s](k);
      pb.text[s](k) = orig + h;
      const double up = pb.loss(m);
      pb.text[s](k) = orig - h;
      const double down = pb.loss(m);
      pb.text[s](k) = orig;
      worst = std::max(worst, std::abs((up - down) / (2 * h) - text_grads[s](k)));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("gradient reversal flips and scales gradients below the junction only") {
  Problem pb;
  pb.target.setZero();  // only the classifier term matters below
  SerModel<double> m(fused_config(), 9);
  m.enable_env_classifier(3, 0.5, *std::make_unique<Rng>(2));
  m.grl().active = false;

  auto env_only = [&](SerModel<double>& model) {
    typename SerModel<double>::BatchCache cache;
    model.forward(pb.inputs, nullptr, &cache, true);
    model.zero_grad();
    model.backward(cache, Matrix<double>::Zero(4, 3), &pb.logit_weights, true);
    std::map<std::string, Matrix<double>> g;
    for (auto* p : model.parameters()) g[p->name] = p->grad;
    return g;
  };

  const auto plain = env_only(m);
  m.grl().active = true;
  const auto reversed = env_only(m);
  for (auto* p : m.parameters()) {
    const auto& a = plain.at(p->name);
    const auto& b = reversed.at(p->name);
    if (p->group == Group::env_classifier) {
      CHECK(b.isApprox(a));
    } else if (p->group != Group::head) {
      CHECK((b + 0.5 * a).norm() <= 1e-12 * (1.0 + a.norm()));
    }
  }
}

TEST_CASE("text fusion appends one slot and leaves acoustic frames untouched") {
  Rng rng(1);
  std::normal_distribution<double> g;
  Matrix<double> frames(7, 8);
  for (auto& v : frames.reshaped()) v = g(rng);
  RowVector<double> proj(8);
  for (auto& v : proj) v = g(rng);
  const Matrix<double> fused = SerModel<double>::fuse(frames, proj);
  CHECK(fused.rows() == 8);
  CHECK(fused.topRows(7) == frames);
  CHECK(fused.row(7) == proj);

  SerModel<float> m(fused_config(), 3);
  const Samples w = random_waves(1, 200, 5).front();
  const Vector<float> t = Vector<float>::Ones(5);
  const auto trace = m.trace({w, &t});
  CHECK(trace.has_text_slot);
  CHECK(trace.acoustic_frames == m.config().frames_for(200));
  REQUIRE(trace.layers.size() == 2);
  CHECK(trace.layers[0].rows() == trace.acoustic_frames + 1);

  CHECK(error_kind([&] { m.trace({w, nullptr}); }) == ErrorKind::validation);
  const Vector<float> wrong = Vector<float>::Ones(4);
  CHECK(error_kind([&] { m.trace({w, &wrong}); }) == ErrorKind::validation);
}

TEST_CASE("evaluation is deterministic and dropout only acts in training") {
  ModelConfig c = testing::tiny_model();
  c.head_dropout = 0.5;
  const SerModel<float> m(c, 11);
  const auto waves = random_waves(3, 120, 8);
  std::vector<ModelInput<float>> in;
  for (const auto& w : waves) in.push_back({w});
  const Matrix<float> a = m.predict(in);
  CHECK(m.predict(in) == a);
  CHECK(SerModel<float>(c, 11).predict(in) == a);
  CHECK_FALSE(SerModel<float>(c, 12).predict(in) == a);

  Rng r1(1), r2(2);
  const Matrix<float> d1 = m.forward(in, &r1).predictions;
  const Matrix<float> d2 = m.forward(in, &r2).predictions;
  CHECK_FALSE(d1 == a);
  CHECK_FALSE(d1 == d2);
}

TEST_CASE("positional information makes frame order matter") {
  const SerModel<double> m(testing::tiny_model(), 4);
  Rng rng(2);
  std::normal_distribution<double> g;
  Matrix<double> seq(6, 8);
  for (auto& v : seq.reshaped()) v = g(rng);
  Matrix<double> perm = seq;
  perm.row(0).swap(perm.row(5));
  const auto a = m.pool(m.transformer_forward(seq), 6, true);
  const auto b = m.pool(m.transformer_forward(perm), 6, true);
  CHECK((a - b).norm() > 1e-6);
}

TEST_CASE("input validation") {
  const SerModel<float> m(testing::tiny_model(), 1);
  const Samples shortw(15, 0.1f);
  CHECK(error_kind([&] { m.conv_encode(shortw); }) == ErrorKind::validation);
  CHECK(m.conv_encode(Samples(16, 0.1f)).rows() == 1);
  CHECK(error_kind([&] { m.project_text(Vector<float>::Ones(3)); }) == ErrorKind::unsupported);
}

TEST_CASE("zero transformer layers pass the sequence through") {
  ModelConfig c = testing::tiny_model();
  c.n_layers = 0;
  const SerModel<double> m(c, 1);
  Matrix<double> seq = Matrix<double>::Random(5, 8);
  CHECK(m.transformer_forward(seq) == seq);
}

TEST_CASE("checkpoint round trip") {
  testing::TempDir dir("ckpt");
  SerModel<float> m(fused_config(), 21);
  SemanticProvider provider(default_catalog(), 16, 1);
  provider.parameters().front()->value(0, 0) = 42.0f;
  save_checkpoint(dir / "m.bin", m, "tgeat", &provider, {{"note", "x"}});
  CHECK_FALSE(std::filesystem::exists(dir / "m.bin.tmp"));

  const Checkpoint ck = load_checkpoint(dir / "m.bin");
  CHECK(ck.stage == "tgeat");
  CHECK(ck.provider_id == "semantic");
  CHECK(ck.metadata.at("note") == "x");
  CHECK(ck.model.config() == m.config());
  const auto a = m.parameters();
  const auto b = ck.model.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->name == b[i]->name);
    CHECK(a[i]->value == b[i]->value);
  }

  SemanticProvider fresh(default_catalog(), 16, 1);
  restore_provider(fresh, ck);
  CHECK(fresh.parameters().front()->value(0, 0) == 42.0f);

  // Corrupt one payload byte.
  {
    std::fstream f(dir / "m.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(-3, std::ios::end);
    char byte = 0;
    f.read(&byte, 1);
    byte ^= 0x5a;
    f.seekp(-3, std::ios::end);
    f.write(&byte, 1);
  }
  CHECK(error_kind([&] { load_checkpoint(dir / "m.bin"); }) == ErrorKind::validation);
  CHECK(error_kind([&] { load_checkpoint(dir / "absent.bin"); }).has_value());
}

TEST_CASE("content hashes") {
  // `printf 'hello\n' | git hash-object --stdin`
  CHECK(content_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(content_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(sha1_hex("abc") == "a9993e364706816aba3e25717850c26c9cd0d89d");
}
