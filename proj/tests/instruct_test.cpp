#include <gtest/gtest.h>
#include <httplib.h>

#include <chrono>
#include <cmath>
#include <json.hpp>
#include <thread>

#include "lumos/instruct/describer.hpp"
#include "lumos/instruct/text_encoder.hpp"
#include "lumos/instruct/tokenizer.hpp"
#include "support/gradcheck.hpp"
#include "support/params.hpp"

namespace lumos::instruct {
namespace {

SceneDescriptor window_soft_left() {
  SceneDescriptor s;
  s.source = LightSource::window;
  s.intensity = Intensity::soft;
  s.position = LightPosition::left;
  s.shadow = shadow_for(s.position);
  s.wall = "beige";
  s.objects = {{ObjectShape::circle, "red", Place::left, 0.3f, 0.5f, 0.2f},
               {ObjectShape::square, "blue", Place::center, 0.5f, 0.5f, 0.25f}};
  return s;
}

// Every scene the template vocabulary can describe, one object variation at a time.
std::vector<SceneDescriptor> template_corpus() {
  std::vector<SceneDescriptor> out;
  for (auto src : {LightSource::window, LightSource::lamp, LightSource::sky, LightSource::none})
    for (auto in : {Intensity::bright, Intensity::moderate, Intensity::soft})
      for (auto pos : {LightPosition::left, LightPosition::right, LightPosition::top, LightPosition::center})
        for (bool refl : {false, true}) {
          SceneDescriptor s = window_soft_left();
          s.source = src;
          s.intensity = in;
          s.position = pos;
          s.shadow = shadow_for(pos);
          s.reflections = refl;
          s.sky = src == LightSource::sky;
          s.wall = s.sky ? "" : "gray";
          out.push_back(s);
        }
  for (const Color& c : object_palette())
    for (auto shape : {ObjectShape::square, ObjectShape::circle})
      for (auto place : {Place::left, Place::right, Place::center, Place::top, Place::bottom}) {
        SceneDescriptor s = window_soft_left();
        s.objects = {{shape, c.name, place, 0.5f, 0.5f, 0.2f}};
        out.push_back(s);
      }
  for (const Color& w : wall_palette()) {
    SceneDescriptor s = window_soft_left();
    s.wall = w.name;
    s.objects.push_back({ObjectShape::square, "yellow", Place::top, 0.5f, 0.2f, 0.1f});
    out.push_back(s);
  }
  SceneDescriptor bare = window_soft_left();
  bare.objects.clear();
  out.push_back(bare);
  return out;
}

TEST(Templates, EmptyMaskGivesSentinel) {
  const Instruction ins = synthesize_instruction(window_soft_left(), FacetMask::parse("empty"));
  EXPECT_EQ(ins.text, "");
  EXPECT_FALSE(ins.lighting || ins.shadows || ins.spatial);
}

TEST(Templates, LightingOnlyFixedString) {
  const Instruction ins = synthesize_instruction(window_soft_left(), FacetMask::parse("lighting"));
  EXPECT_EQ(ins.text, "The scene is lit by natural light from a window on the left, and the light is soft.");
  EXPECT_EQ(ins.source, Source::template_fill);
}

TEST(Templates, FullTextConcatenatesFacetsInOrder) {
  for (const SceneDescriptor& s : template_corpus()) {
    const std::string l = synthesize_instruction(s, FacetMask::parse("lighting")).text;
    const std::string sh = synthesize_instruction(s, FacetMask::parse("shadows")).text;
    const std::string sp = synthesize_instruction(s, FacetMask::parse("spatial")).text;
    EXPECT_EQ(synthesize_instruction(s).text, l + " " + sh + " " + sp);
  }
}

TEST(Templates, ShadowAndSpatialPhrases) {
  const SceneDescriptor s = window_soft_left();
  EXPECT_EQ(shadows_text(s), "Shadows fall toward the right, with no visible reflections.");
  EXPECT_EQ(spatial_text(s),
            "The scene shows a red circle on the left and a blue square in the center in front of a "
            "beige wall.");
}

TEST(Templates, Deterministic) {
  const SceneDescriptor s = window_soft_left();
  EXPECT_EQ(synthesize_instruction(s).text, synthesize_instruction(s).text);
}

TEST(FacetMask, ParseAndPrint) {
  EXPECT_EQ(FacetMask::parse("full"), (FacetMask{true, true, true}));
  EXPECT_EQ(FacetMask::parse("shadows,lighting"), (FacetMask{true, true, false}));
  EXPECT_EQ(FacetMask::parse("lighting,spatial").str(), "lighting,spatial");
  EXPECT_EQ(FacetMask::parse("empty").str(), "empty");
  EXPECT_THROW(FacetMask::parse("colour"), std::invalid_argument);
}

TEST(SceneJson, RoundTrip) {
  const SceneDescriptor s = window_soft_left();
  const nlohmann::json j = s;
  const SceneDescriptor back = j.get<SceneDescriptor>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(j["light_source"], "window");
}

TEST(Tokenizer, EmptyStringIsBosEos) {
  const Tokenizer tok;
  EXPECT_EQ(tok.tokenize(""), (std::vector<std::int32_t>{Tokenizer::kBos, Tokenizer::kEos}));
  EXPECT_EQ(tok.tokenize("   "), (std::vector<std::int32_t>{Tokenizer::kBos, Tokenizer::kEos}));
}

TEST(Tokenizer, RepeatedCallsAgree) {
  const Tokenizer tok;
  const auto a = tok.tokenize("soft light");
  EXPECT_EQ(a, tok.tokenize("soft light"));
  EXPECT_EQ(a.size(), 4u);  // both words are in the lexicon
}

TEST(Tokenizer, RoundTripOverTemplateCorpus) {
  const Tokenizer tok;
  for (const SceneDescriptor& s : template_corpus()) {
    for (const char* mask : {"full", "lighting", "shadows", "spatial", "lighting,spatial"}) {
      const std::string text = synthesize_instruction(s, FacetMask::parse(mask)).text;
      const auto ids = tok.tokenize(text);
      EXPECT_EQ(tok.detokenize(ids), normalize(text));
      for (std::size_t i = 1; i + 1 < ids.size(); ++i) {
        EXPECT_GE(ids[i], Tokenizer::kWordBase) << "template word fell back to bytes in: " << text;
      }
    }
  }
}

TEST(Tokenizer, ByteFallbackRoundTrips) {
  const Tokenizer tok;
  for (const char* s : {"Neon glow zzz qqq!", "a (strange) Lamp: 3 lux", "naïve café light", "x!y"}) {
    EXPECT_EQ(tok.detokenize(tok.tokenize(s)), normalize(s)) << s;
  }
}

TEST(Tokenizer, TruncatesToMaxLen) {
  const Tokenizer tok;
  std::string longtext;
  for (int i = 0; i < 200; ++i) longtext += "soft ";
  const auto ids = tok.tokenize(longtext);
  EXPECT_EQ(ids.size(), Tokenizer::kMaxLen);
  EXPECT_EQ(ids.front(), Tokenizer::kBos);
  EXPECT_EQ(ids.back(), Tokenizer::kEos);
  EXPECT_EQ(tok.tokenize(std::string(500, 'q')).size(), Tokenizer::kMaxLen);
}

TEST(Tokenizer, FacetMonotonicity) {
  const Tokenizer tok;
  for (const SceneDescriptor& s : template_corpus()) {
    const std::size_t full = tok.tokenize(synthesize_instruction(s).text).size();
    for (const char* mask : {"empty", "lighting", "shadows", "spatial", "lighting,shadows", "shadows,spatial"}) {
      EXPECT_GE(full, tok.tokenize(synthesize_instruction(s, FacetMask::parse(mask)).text).size());
    }
  }
}

TextEncoderConfig small_encoder(std::size_t vocab) {
  TextEncoderConfig c;
  c.vocab = vocab;
  c.d = 8;
  c.layers = 2;
  c.max_len = 77;
  return c;
}

TEST(TextEncoder, IdenticalTokensIdenticalEmbedding) {
  const Tokenizer tok;
  Rng rng(1);
  TextEncoder enc(small_encoder(tok.vocab_size()), rng);
  const auto ids = tok.tokenize("The scene is lit by dim ambient light.");
  const Tensor a = enc.forward(ids);
  EXPECT_EQ(a.shape(), (Shape{ids.size(), 8}));
  EXPECT_EQ(a.to_vector(), enc.forward(ids).to_vector());
}

TEST(TextEncoder, PositionSensitive) {
  const Tokenizer tok;
  Rng rng(2);
  TextEncoder enc(small_encoder(tok.vocab_size()), rng);
  auto ids = tok.tokenize("soft light from the left");
  const Tensor a = enc.forward(ids);
  std::swap(ids[1], ids[2]);
  const Tensor b = enc.forward(ids);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) diff += std::pow(a.at(i) - b.at(i), 2);
  EXPECT_GT(diff, 0.0);
}

TEST(TextEncoder, FiniteOverTemplateCorpus) {
  const Tokenizer tok;
  Rng rng(3);
  TextEncoder enc(small_encoder(tok.vocab_size()), rng);
  for (const SceneDescriptor& s : template_corpus()) {
    EXPECT_NO_THROW(enc.forward(tok.tokenize(synthesize_instruction(s).text)));
  }
}

TEST(TextEncoder, GradientCheckThreeTokens) {
  Rng rng(4);
  TextEncoder enc(small_encoder(12), rng);
  ParamList params;
  enc.collect("", params);
  convert_params(params, DType::f64);
  testing::randomize(params, rng, 0.4);
  const std::vector<std::int32_t> ids{0, 7, 3};
  const Tensor r = rng.normal_tensor({3, 8}, DType::f64);
  const auto res = testing::grad_check([&] { return testing::project(enc.forward(ids), r); },
                                       testing::tensors_of(params));
  EXPECT_LT(res.max_rel_error, 1e-5) << res.worst;
}

Image lit_image(double level, int dx) {
  Image img(3, 24, 24);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 24; ++y)
      for (std::size_t x = 0; x < 24; ++x) {
        img.at(c, y, x) = static_cast<float>(level + 0.01 * dx * (static_cast<double>(x) - 11.5));
      }
  return img;
}

TEST(HeuristicDescriber, IntensityAndPosition) {
  HeuristicDescriber d;
  const Instruction a = d.describe(lit_image(0.8, 1), nullptr);
  ASSERT_TRUE(a.scene);
  EXPECT_EQ(a.scene->intensity, Intensity::bright);
  EXPECT_EQ(a.scene->position, LightPosition::right);
  EXPECT_EQ(a.source, Source::heuristic);
  const Instruction b = d.describe(lit_image(0.2, -1), nullptr);
  EXPECT_EQ(b.scene->intensity, Intensity::soft);
  EXPECT_EQ(b.scene->position, LightPosition::left);
  EXPECT_EQ(d.describe(lit_image(0.4, 0), nullptr).scene->position, LightPosition::center);
}

TEST(HeuristicDescriber, KeepsLayoutFromPreviousScene) {
  HeuristicDescriber d;
  const Instruction prev = synthesize_instruction(window_soft_left());
  const Instruction next = d.describe(lit_image(0.8, 0), &prev);
  EXPECT_EQ(next.spatial, prev.spatial);
  EXPECT_EQ(next.scene->intensity, Intensity::bright);
  EXPECT_NE(next.text, prev.text);
}

class MockVlm : public ::testing::Test {
 protected:
  void SetUp() override {
    server.Post("/describe", [this](const httplib::Request& req, httplib::Response& res) {
      last_body = req.body;
      last_auth = req.get_header_value("Authorization");
      if (delay.count() > 0) std::this_thread::sleep_for(delay);
      res.set_content(reply, "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  void TearDown() override {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/describe"; }

  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::string reply = R"({"text": "A lamp on the right casts bright light."})";
  std::chrono::milliseconds delay{0};
  std::string last_body, last_auth;
};

TEST_F(MockVlm, PassesReplyThrough) {
  ExternalDescriber d({url(), "Bearer k", std::chrono::milliseconds(5000)});
  const Instruction ins = d.describe(lit_image(0.3, 0), nullptr);
  EXPECT_EQ(ins.text, "A lamp on the right casts bright light.");
  EXPECT_EQ(ins.source, Source::external_vlm);
  const auto body = nlohmann::json::parse(last_body);
  EXPECT_EQ(body["prompt"], kVlmPrompt);
  EXPECT_EQ(decode_png(base64_decode(body["image_b64"].get<std::string>())).width, 24u);
  EXPECT_EQ(last_auth, "Bearer k");
}

TEST_F(MockVlm, MalformedReply) {
  reply = R"({"answer": 3})";
  ExternalDescriber d({url(), "", std::chrono::milliseconds(5000)});
  EXPECT_THROW(d.describe(lit_image(0.3, 0), nullptr), DescriberReplyError);
  reply = "not json";
  EXPECT_THROW(d.describe(lit_image(0.3, 0), nullptr), DescriberReplyError);
}

TEST_F(MockVlm, TimeoutBudgetExceeded) {
  delay = std::chrono::milliseconds(1500);
  ExternalDescriber d({url(), "", std::chrono::milliseconds(300)});
  EXPECT_THROW(d.describe(lit_image(0.3, 0), nullptr), DescriberTimeoutError);
}

TEST(ExternalDescriber, UnreachableEndpoint) {
  ExternalDescriber d({"http://127.0.0.1:1/describe", "", std::chrono::milliseconds(2000)});
  EXPECT_THROW(d.describe(lit_image(0.3, 0), nullptr), DescriberConnectionError);
}

TEST(ExternalDescriber, DefaultTimeoutIsThirtySeconds) {
  EXPECT_EQ(ExternalDescriberConfig{}.timeout, std::chrono::milliseconds(30000));
}

TEST(Prompt, Verbatim) {
  EXPECT_STREQ(kVlmPrompt,
               "Provide a detailed description of the lighting conditions (including light source, "
               "position, intensity), shadows and reflections distribution, and scene information "
               "in this image");
}

}  // namespace
}  // namespace lumos::instruct
