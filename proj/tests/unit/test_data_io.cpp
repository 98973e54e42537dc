// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <fstream>

#include "oracles.hpp"

using namespace oodk;

TEST_CASE("OODE files round trip bitwise") {
  std::mt19937_64 gen(91);
  std::vector<Vector> vs;
  std::vector<int> ls;
  for (int i = 0; i < 50; ++i) {
    Vector v = oracle::random_vector(7, gen, -100, 100);
    for (double& x : v) x = static_cast<float>(x);  // representable in the file
    vs.push_back(v);
    ls.push_back(i % 4);
  }
  const auto bytes = encode_embeddings(vs, ls);
  CHECK(bytes.size() == 4 + 4 + 4 + 1 + 50 * 7 * 4 + 50 * 4);
  const auto f = decode_embeddings(bytes);
  CHECK(f.vectors == vs);
  CHECK(f.labels == ls);
  CHECK(f.dim == 7);
  CHECK(encode_embeddings(f.vectors, f.labels) == bytes);

  const auto unlabelled = decode_embeddings(encode_embeddings(vs, {}));
  CHECK(unlabelled.labels.empty());

  auto cut = bytes;
  cut.pop_back();
  try {
    decode_embeddings(cut);
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::format);
  }
  CHECK_THROWS_AS(encode_embeddings({{1.0}, {1.0, 2.0}}, {}), Error);
}

TEST_CASE("PPM round trip is within one quantization step") {
  std::mt19937_64 gen(92);
  for (int channels : {1, 3}) {
    const Image img = oracle::random_image(9, 13, channels, gen);
    const auto bytes = encode_ppm(img);
    CHECK(bytes[1] == (channels == 3 ? '6' : '5'));
    const Image back = decode_ppm(bytes);
    REQUIRE(back.same_shape(img));
    for (std::size_t i = 0; i < img.data.size(); ++i) REQUIRE(std::abs(back.data[i] - img.data[i]) <= 1.0 / 255.0);
    CHECK(encode_ppm(back) == bytes);
  }
}

TEST_CASE("PPM decoder handles comments and rejects malformed files") {
  const std::string text = "P5\n# comment\n2 1\n255\n";
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  bytes.push_back(0);
  bytes.push_back(255);
  const Image img = decode_ppm(bytes);
  CHECK(img.width == 2);
  CHECK(img.data == std::vector<double>{0.0, 1.0});

  auto expect_format = [](const std::string& s) {
    try {
      decode_ppm(std::vector<std::uint8_t>(s.begin(), s.end()));
      FAIL("expected failure for " << s);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::format);
    }
  };
  expect_format("P3\n1 1\n255\n");
  expect_format("P6\n2 2\n255\n\x01\x02");
  expect_format("P5\n1 1\n65535\n\x01\x02");
  expect_format("P5\nx 1\n255\n");
}

TEST_CASE("config defaults and validation") {
  const RunConfig c = parse_config(std::string("{}"));
  CHECK(c.train.m_id == -20.0);
  CHECK(c.train.m_ood == -7.0);
  CHECK(c.train.alpha == 0.1);
  CHECK(c.train.beta == 0.1);
  CHECK(c.train.epochs == 50);
  CHECK(c.train.lr == 1e-3);
  CHECK(c.train.batch_size == 128);
  CHECK(c.tails.draws_n_total == 10000);
  CHECK(c.tails.rank_n == 64);
  CHECK(c.nda.augmix_severity == 11);
  CHECK(c.nda.jigsaw_grid == 4);
  CHECK(c.data.dim == 8);

  auto expect_input = [](const std::string& s, const std::string& fragment) {
    try {
      parse_config(s);
      FAIL("expected failure for " << s);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::input);
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };
  expect_input(R"({"train":{"m_id":-7,"m_ood":-7}})", "m_id");
  expect_input(R"({"train":{"learning_rate":0.1}})", "train.learning_rate");
  expect_input(R"({"extra":{}})", "extra");
  expect_input(R"({"train":{"mode":"NOPE"}})", "mode");
  expect_input(R"({"train":{"lr":"fast"}})", "train.lr");
  expect_input(R"({"data":{"n_per_class":5}})", "n_per_class");
  expect_input("{not json", "invalid JSON");
}

TEST_CASE("config dump and load are idempotent") {
  RunConfig c = parse_config(std::string(R"({"train":{"mode":"VOS_LIKE","lr":0.02,"seed":9},"nda":{"jigsaw_grid":2},
                                             "data":{"modality_kind":"scaled_shifted_mixture"}})"));
  const std::string once = dump_config(c).dump();
  const std::string twice = dump_config(parse_config(once)).dump();
  CHECK(once == twice);
  CHECK(parse_config(once).train.mode == TrainMode::vos_like);
}

TEST_CASE("synthetic benchmark layout") {
  SyntheticSpec spec;
  spec.n_per_class = 100;
  Rng rng(5);
  const auto b = gen_synthetic(spec, rng);
  CHECK(b.train.size() == 4 * 90);
  CHECK(b.test_id.size() == 4 * 10);
  CHECK(b.test_semantic.size() == 2 * 100);
  CHECK(b.test_modality.size() == 100);
  CHECK(b.train.k_classes == 4);
  REQUIRE(b.class_means.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(std::sqrt(dot(b.class_means[i], b.class_means[i])) == Catch::Approx(6.0));
    for (std::size_t j = 0; j < i; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 8; ++k) s += (b.class_means[i][k] - b.class_means[j][k]) * (b.class_means[i][k] - b.class_means[j][k]);
      CHECK(std::sqrt(s) >= 6.0);
    }
  }
  for (int c = 0; c < 4; ++c) CHECK(std::count(b.train.labels.begin(), b.train.labels.end(), c) == 90);
  for (int l : b.test_semantic.labels) CHECK(l >= 4);

  Rng again(5);
  const auto b2 = gen_synthetic(spec, again);
  CHECK(b2.train.inputs == b.train.inputs);
  CHECK(b2.test_modality.inputs == b.test_modality.inputs);
}

TEST_CASE("modality samples stay inside the enlarged bounding box") {
  for (auto kind : {ModalityKind::uniform_cube, ModalityKind::scaled_shifted_mixture}) {
    SyntheticSpec spec;
    spec.n_per_class = 60;
    spec.modality_kind = kind;
    Rng rng(6);
    const auto b = gen_synthetic(spec, rng);
    Vector lo(8, INFINITY), hi(8, -INFINITY);
    for (const auto* set : {&b.train, &b.test_id, &b.test_semantic})
      for (const auto& x : set->inputs)
        for (std::size_t j = 0; j < 8; ++j) {
          lo[j] = std::min(lo[j], x[j]);
          hi[j] = std::max(hi[j], x[j]);
        }
    for (const auto& x : b.test_modality.inputs)
      for (std::size_t j = 0; j < 8; ++j) {
        const double c = 0.5 * (lo[j] + hi[j]), r = 0.75 * (hi[j] - lo[j]);
        REQUIRE(x[j] >= c - r - 1e-12);
        REQUIRE(x[j] <= c + r + 1e-12);
      }
  }
}

TEST_CASE("bundle directory and training data loader") {
  const auto dir = oracle::scratch_dir("bundle");
  SyntheticSpec spec;
  spec.n_per_class = 30;
  Rng rng(7);
  const auto b = gen_synthetic(spec, rng);
  write_bundle(dir.string(), b, spec);
  for (const char* f : {"train.oode", "test_id.oode", "test_semantic.oode", "test_modality.oode", "meta.json"})
    CHECK(std::filesystem::exists(dir / f));
  const Dataset d = load_training_data(dir.string());
  CHECK(d.k_classes == 4);
  CHECK(d.labels == b.train.labels);
  CHECK(d.size() == b.train.size());
}

TEST_CASE("image datasets load from labels.csv") {
  const auto dir = oracle::scratch_dir("images");
  std::mt19937_64 gen(93);
  std::ofstream labels(dir / "labels.csv");
  labels << "filename,label\n";
  for (int i = 0; i < 4; ++i) {
    const std::string name = "im" + std::to_string(i) + ".ppm";
    write_ppm((dir / name).string(), oracle::random_image(4, 4, 3, gen));
    labels << name << ',' << i % 2 << '\n';
  }
  labels.close();
  const Dataset d = load_image_dataset(dir.string());
  CHECK(d.size() == 4);
  CHECK(d.k_classes == 2);
  REQUIRE(d.shape.has_value());
  CHECK(d.shape->channels == 3);
  CHECK(d.dim() == 48);
  const RasterView view = RasterView::for_dataset(d);
  CHECK(view.from_image(view.to_image(d.inputs[1])) == d.inputs[1]);
}

TEST_CASE("vector inputs map to unit-range strips") {
  Dataset d;
  d.inputs = {{-2.0, 10.0, 5.0}, {2.0, 20.0, 5.0}};
  d.labels = {0, 1};
  d.k_classes = 2;
  const RasterView view = RasterView::for_dataset(d);
  const Image img = view.to_image(Vector{0.0, 15.0, 5.0});
  CHECK(img.height == 1);
  CHECK(img.width == 3);
  CHECK(img.data == std::vector<double>{0.5, 0.5, 0.0});
  const Vector back = view.from_image(img);
  CHECK(back == Vector{0.0, 15.0, 5.0});
}

TEST_CASE("score files round trip") {
  const std::vector<ScoreRow> rows{{"a", 0.1, "ID"}, {"b", -3.25e-7, "OOD"}};
  const auto parsed = parse_scores_csv(scores_csv(rows));
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].score == 0.1);
  CHECK(parsed[1].score == -3.25e-7);
  CHECK(parsed[1].label == "OOD");
  CHECK(scores_with_label(parsed, "ID") == std::vector<double>{0.1});
  CHECK_THROWS_AS(parse_scores_csv("x,y\n"), Error);
  CHECK_THROWS_AS(parse_scores_csv("id,score,label\na,zz,ID\n"), Error);
  CHECK_THROWS_AS(parse_scores_csv("id,score,label\na,1,MAYBE\n"), Error);
}
