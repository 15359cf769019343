// SPDX-License-Identifier: Apache-2.0
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace caicl;
using caicl::testing::crop_of;
using caicl::testing::desc;
using caicl::testing::FailingBackend;
using caicl::testing::GarbageInjector;
using caicl::testing::read_file;

namespace {

const Descriptor kQuery = desc("circle", "striped", "red", 8);

std::vector<ObjectCrop> four_candidates()
{
    return {crop_of(1, desc("square", "solid", "blue", 10), "o1"), crop_of(2, kQuery, "o2"),
            crop_of(3, desc("circle", "striped", "red", 8.3), "o3"), crop_of(4, desc("star", "dotted", "green", 7), "o4")};
}

std::vector<std::string> labels(const ChatRequest& req)
{
    std::vector<std::string> out;
    const auto& parts = req.messages.at(0).parts;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i)
        if (std::holds_alternative<ImagePart>(parts[i + 1])) {
            const auto& t = std::get<TextPart>(parts[i]).text;
            const auto nl = t.rfind('\n', t.size() - 2);
            out.push_back(t.substr(nl == std::string::npos ? 0 : nl + 1));
        }
    return out;
}

} // namespace

TEST(Prompts, EmbeddedTemplatesMatchFiles)
{
    const std::filesystem::path dir = std::filesystem::path(CAICL_SOURCE_DIR) / "data" / "prompts";
    EXPECT_EQ(read_file(dir / "localization.v1.txt"), std::string(kLocalizationTemplateV1.substr(1)));
    EXPECT_EQ(read_file(dir / "recognition.v1.txt"), std::string(kRecognitionTemplateV1.substr(1)));
    const auto loaded = PromptTemplates::load(dir);
    EXPECT_EQ(loaded.localization, PromptTemplates::defaults().localization);
    EXPECT_THROW(PromptTemplates::load(dir, "v9"), ConfigError);
}

TEST(Prompts, LocalizationLayout)
{
    const auto req = build_localization_prompt(crop_of(0, kQuery), {crop_of(1, kQuery), crop_of(2, kQuery)});
    EXPECT_EQ(count_images(req), 3u);
    EXPECT_EQ(labels(req), (std::vector<std::string>{"query\n", "image 1\n", "image 2\n"}));
    EXPECT_NE(prompt_text(req).find("confusable_pair:"), std::string::npos);
    EXPECT_THROW(build_localization_prompt(crop_of(0, kQuery), {crop_of(1, kQuery)}), NotEnoughCandidates);
}

TEST(Prompts, CandidatesFollowSerialOrder)
{
    auto cands = four_candidates();
    const auto a = build_recognition_prompt(crop_of(0, kQuery), cands, std::nullopt);
    std::reverse(cands.begin(), cands.end());
    const auto b = build_recognition_prompt(crop_of(0, kQuery), cands, std::nullopt);
    EXPECT_EQ(labels(b), (std::vector<std::string>{"query\n", "image 1\n", "image 2\n", "image 3\n", "image 4\n"}));
    EXPECT_EQ(serialize_chat_request(a), serialize_chat_request(b));
}

TEST(Prompts, VanillaHasNoGuidance)
{
    const auto req = build_recognition_prompt(crop_of(0, kQuery), four_candidates(), std::nullopt);
    const auto text = prompt_text(req);
    EXPECT_EQ(text.find("attention"), std::string::npos);
    EXPECT_EQ(text.find("[guided]"), std::string::npos);
    EXPECT_NE(text.find("best_match:"), std::string::npos);
}

TEST(Prompts, GuidedEmbedsReport)
{
    const ConfusionReport r{4, {2, 3}, "same circle", "compare the size of image 2 and image 3", "image 3 is larger"};
    const auto text = prompt_text(build_recognition_prompt(crop_of(0, kQuery), four_candidates(), r));
    EXPECT_NE(text.find("attention: compare the size of image 2 and image 3\n"), std::string::npos);
    EXPECT_NE(text.find("details: image 3 is larger\n"), std::string::npos);
    EXPECT_EQ(text.find("{attention}"), std::string::npos);

    ConfusionReport bad = r;
    bad.confusable_pair = {2, 7};
    EXPECT_THROW(build_recognition_prompt(crop_of(0, kQuery), four_candidates(), bad), InvalidReportSerials);
}

TEST(Prompts, SerialsMustBeDense)
{
    auto cands = four_candidates();
    cands[3].serial = 6;
    EXPECT_THROW(build_recognition_prompt(crop_of(0, kQuery), cands, std::nullopt), InvalidSpec);
}

TEST(Matcher, TwoRequestsForCaiclOneForVanilla)
{
    MockBackend mock;
    Rng a(1), b(1);
    const auto c = match_caicl(crop_of(0, kQuery), four_candidates(), mock, {}, a);
    ASSERT_EQ(c.trace.requests.size(), 2u);
    EXPECT_EQ(c.trace.requests[0].phase, "localization");
    EXPECT_EQ(c.trace.requests[1].phase, "recognition");
    EXPECT_FALSE(c.trace.fallback);
    ASSERT_TRUE(c.trace.report);
    EXPECT_EQ(c.trace.report->confusable_pair, std::make_pair(2, 3));

    const auto v = match_vanilla(crop_of(0, kQuery), four_candidates(), mock, {}, b);
    ASSERT_EQ(v.trace.requests.size(), 1u);
    EXPECT_EQ(v.trace.requests[0].phase, "recognition");
    EXPECT_FALSE(v.trace.report);
}

TEST(Matcher, SingleCandidateSkipsLocalization)
{
    MockBackend mock;
    Rng rng(1);
    const auto d = match_caicl(crop_of(0, kQuery), {crop_of(1, kQuery)}, mock, {}, rng);
    EXPECT_EQ(d.trace.requests.size(), 1u);
    EXPECT_TRUE(d.trace.fallback);
    EXPECT_EQ(d.best_match, 1);
    EXPECT_THROW(match_caicl(crop_of(0, kQuery), {}, mock, {}, rng), NoCandidates);
}

TEST(Matcher, ParseRetryThenSuccess)
{
    MockBackend mock;
    GarbageInjector once(mock, 1);
    Rng rng(1);
    const auto d = match_caicl(crop_of(0, kQuery), four_candidates(), once, {}, rng);
    ASSERT_EQ(d.trace.requests.size(), 3u);
    EXPECT_FALSE(d.trace.requests[0].error.empty());
    EXPECT_TRUE(d.trace.requests[1].error.empty());
    EXPECT_EQ(d.trace.requests[0].prompt, d.trace.requests[1].prompt);
    EXPECT_FALSE(d.trace.fallback);
}

TEST(Matcher, ExhaustedLocalizationFallsBackToVanilla)
{
    MockBackend mock;
    GarbageInjector always(mock, 100);
    Rng r1(4), r2(4);
    const auto d = match_caicl(crop_of(0, kQuery), four_candidates(), always, {}, r1);
    EXPECT_TRUE(d.trace.fallback);
    EXPECT_FALSE(d.trace.report);
    ASSERT_EQ(d.trace.requests.size(), 4u); // 3 localization attempts + 1 recognition
    // Same draw, same recognition seed: the vanilla answer for this rng state.
    const auto v = match_vanilla(crop_of(0, kQuery), four_candidates(), mock, {}, r2);
    EXPECT_EQ(d.best_match, v.best_match);
    EXPECT_EQ(d.trace.requests.back().prompt, v.trace.requests.back().prompt);
}

TEST(Matcher, FailModeRaises)
{
    MockBackend mock;
    GarbageInjector always(mock, 100);
    MatchPolicy p;
    p.fallback = FallbackMode::Fail;
    Rng rng(4);
    try {
        match_caicl(crop_of(0, kQuery), four_candidates(), always, p, rng);
        FAIL();
    } catch (const MatchFailed& e) {
        EXPECT_EQ(e.cause(), MatchFailed::Cause::Parse);
    }
}

TEST(Matcher, RecognitionGarbageExhaustsToParseFailure)
{
    MockBackend mock;
    GarbageInjector bad(mock, 0, 100);
    Rng rng(4);
    MatchPolicy p;
    p.parse_retry_limit = 1;
    try {
        match_vanilla(crop_of(0, kQuery), four_candidates(), bad, p, rng);
        FAIL();
    } catch (const MatchFailed& e) {
        EXPECT_EQ(e.cause(), MatchFailed::Cause::Parse);
    }
    EXPECT_EQ(bad.calls.load(), 2);
}

TEST(Matcher, GuidedRecognitionGarbageFallsBack)
{
    MockBackend mock;
    GarbageInjector bad(mock, 0, 3);
    Rng rng(4);
    const auto d = match_caicl(crop_of(0, kQuery), four_candidates(), bad, {}, rng);
    EXPECT_TRUE(d.trace.fallback);
    EXPECT_EQ(d.trace.requests.size(), 5u); // localization + 3 guided + 1 vanilla
}

TEST(Matcher, BackendErrorsAreTerminal)
{
    FailingBackend down(BackendErrorKind::Transport);
    Rng rng(1);
    try {
        match_caicl(crop_of(0, kQuery), four_candidates(), down, {}, rng);
        FAIL();
    } catch (const MatchFailed& e) {
        EXPECT_EQ(e.cause(), MatchFailed::Cause::Backend);
    }
}

TEST(Matcher, ConsumesExactlyOneDraw)
{
    MockBackend mock;
    Rng a(9), b(9);
    match_caicl(crop_of(0, kQuery), four_candidates(), mock, {}, a);
    b.next_u64();
    EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Matcher, VanillaAccuracyOnConfusablePair)
{
    // Query matches serial 1; serial 2 differs only slightly in size.
    MockBackend mock;
    const std::vector<ObjectCrop> cands{crop_of(1, kQuery), crop_of(2, desc("circle", "striped", "red", 8.2))};
    Rng rng(3);
    int ok_v = 0, ok_c = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        Rng fork = rng;
        ok_v += match_vanilla(crop_of(0, kQuery), cands, mock, {}, rng).best_match == 1;
        ok_c += match_caicl(crop_of(0, kQuery), cands, mock, {}, fork).best_match == 1;
    }
    EXPECT_NEAR(ok_v / double(n), 0.70, 0.015);
    EXPECT_NEAR(ok_c / double(n), 0.95, 0.008);
}

TEST(Matcher, TraceJson)
{
    MockBackend mock;
    Rng rng(1);
    const auto d = match_caicl(crop_of(0, kQuery), four_candidates(), mock, {}, rng);
    const auto full = to_json(d, true);
    const auto brief = to_json(d, false);
    EXPECT_TRUE(full["trace"]["requests"][0].contains("prompt"));
    EXPECT_FALSE(brief["trace"]["requests"][0].contains("prompt"));
    EXPECT_TRUE(brief["trace"]["requests"][0].contains("prompt_digest"));
}

TEST(Matcher, ParseNames)
{
    EXPECT_EQ(parse_matcher_kind("vanilla"), MatcherKind::Vanilla);
    EXPECT_EQ(parse_fallback_mode("fail"), FallbackMode::Fail);
    EXPECT_THROW(parse_matcher_kind("other"), ConfigError);
}
