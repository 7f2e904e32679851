#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "twb/digest_engine.hpp"
#include "twb/error.hpp"
#include "twb/io.hpp"

using namespace twb;
using namespace twb::testing;

namespace {

const char* kReply =
    "A coffee can model.\n\n## Variables\ncan holds beans\n\n## Constants\nnone\n\n**Actions:**\nthree picks\n\n"
    "## Transitions\nbeans decrease\n\n### Invariants\nparity of white\n";

struct MockLlm {
  TempDir dir;
  LlmConfig config;
  LlmClient client;

  explicit MockLlm(const Json& script) {
    config.provider = Provider::Mock;
    config.mock_script = write_mock_script(dir.path(), "digest.json", script).string();
  }
};

std::string fixed_clock() { return "2024-01-01T00:00:00Z"; }

DigestRequest coffeecan_request() { return DigestRequest{correct_spec(), model_cfg(), "s/1", std::nullopt}; }

}  // namespace

TEST(DigestEngine, DeterministicPromptAndReport) {
  StateGraph g = fixture_graph("coffeecan_ok");
  MockLlm llm(Json{{"mode", "sequence"}, {"responses", {kReply}}});
  DigestReport a = run_digest(coffeecan_request(), &g, llm.config, llm.client, fixed_clock);
  DigestReport b = run_digest(coffeecan_request(), &g, llm.config, llm.client, fixed_clock);
  EXPECT_EQ(a.prompt, b.prompt);
  EXPECT_EQ(to_text(digest_report_to_json(a)), to_text(digest_report_to_json(b)));
  EXPECT_EQ(a.prompt.to_json().dump(), b.prompt.to_json().dump());
}

TEST(DigestEngine, PromptNamesInitialAndTerminalStates) {
  StateGraph g = fixture_graph("coffeecan_ok");
  Conversation p = build_digest_prompt(coffeecan_request(), summarize_structure(g, kDigestTopK));
  const std::string& user = p.messages.back().content;
  EXPECT_NE(user.find(kInitialState), std::string::npos);
  EXPECT_NE(user.find(std::string("can = ") + kTerminalState), std::string::npos);
  EXPECT_NE(user.find(correct_spec()), std::string::npos);
  EXPECT_EQ(p.messages.front().role, Role::System);
}

TEST(DigestEngine, SectionsSplitAtHeadings) {
  DigestSections s = parse_sections(kReply);
  EXPECT_EQ(s.overview, "A coffee can model.");
  EXPECT_EQ(s.variables, "can holds beans");
  EXPECT_EQ(s.constants, "none");
  EXPECT_EQ(s.actions, "three picks");
  EXPECT_EQ(s.transitions, "beans decrease");
  EXPECT_EQ(s.invariants, "parity of white");

  DigestSections plain = parse_sections("no headings here\n## Weather\nsunny");
  EXPECT_EQ(plain.overview, "no headings here\n## Weather\nsunny");
  EXPECT_TRUE(plain.actions.empty());
}

TEST(DigestEngine, Selection) {
  std::string spec = correct_spec();
  EXPECT_EQ(selection_excerpt(spec, {19, 22}).substr(0, 21), "PickSameColorWhite ==");
  try {
    selection_excerpt(spec, {30, 500});
    FAIL() << "selection past the end accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SelectionOutOfRange);
  }
  EXPECT_THROW(selection_excerpt(spec, {5, 4}), Error);
  EXPECT_THROW(selection_excerpt(spec, {0, 4}), Error);

  StateGraph g = fixture_graph("coffeecan_ok");
  MockLlm llm(Json{{"mode", "echo"}});
  DigestRequest req = coffeecan_request();
  req.selection = LineSelection{19, 22};
  DigestReport r = run_digest(req, &g, llm.config, llm.client, fixed_clock);
  ASSERT_TRUE(r.selection_echo);
  EXPECT_NE(r.prompt.messages.back().content.find("## Selected lines 19-22"), std::string::npos);
  Json doc = digest_report_to_json(r);
  EXPECT_EQ(doc["created_at"], fixed_clock());
}

TEST(DigestEngine, MissingGraph) {
  MockLlm llm(Json{{"mode", "echo"}});
  try {
    run_digest(coffeecan_request(), nullptr, llm.config, llm.client, fixed_clock);
    FAIL() << "digest without a graph";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingGraph);
  }
}

TEST(DigestEngine, SummaryInReportMatchesGraph) {
  StateGraph g = fixture_graph("coffeecan_ok");
  MockLlm llm(Json{{"mode", "echo"}});
  DigestReport r = run_digest(coffeecan_request(), &g, llm.config, llm.client, fixed_clock);
  EXPECT_EQ(r.summary.node_count, g.nodes.size());
  EXPECT_EQ(r.summary.edge_count, g.edges.size());
  ASSERT_EQ(r.summary.terminal_states.size(), 1u);
  EXPECT_EQ(render_state_inline(r.summary.terminal_states[0].bindings), std::string("can = ") + kTerminalState);
}
