#include <random>
#include <regex>
#include <set>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "generators.hpp"
#include "twb/documents.hpp"
#include "twb/error.hpp"
#include "twb/tlc_parser.hpp"

using namespace twb;
using namespace twb::testing;

namespace {

// The invariant named in a cfg, read without the library.
std::string cfg_invariant(const std::string& cfg) {
  std::smatch m;
  std::regex re(R"(INVARIANTS?\s+(\w+))");
  if (!std::regex_search(cfg, m, re)) return {};
  return m[1].str();
}

// Node lines of a dot dump, counted with a plain regex.
std::size_t dot_node_lines(const std::string& dot) {
  std::regex node(R"(^-?\d+ \[label=)");
  std::size_t n = 0;
  std::istringstream in(dot);
  for (std::string line; std::getline(in, line);) {
    if (std::regex_search(line, node)) ++n;
  }
  return n;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no twb::Error thrown";
  return ErrorCode::IoFailure;
}

}  // namespace

TEST(TlcParser, CleanRunHasStatsAndNoError) {
  auto out = fixture_output("coffeecan_ok");
  EXPECT_FALSE(out.error.has_value());
  ASSERT_TRUE(out.stats.populated);
  EXPECT_EQ(out.stats.distinct_states, dot_node_lines(fixture_text("coffeecan_ok.dot")));
  EXPECT_GT(out.stats.states_generated, out.stats.distinct_states - 1);
  EXPECT_EQ(fixture_exit("coffeecan_ok"), 0);
}

TEST(TlcParser, CleanRunDepthMatchesLongestShortestPath) {
  auto out = fixture_output("coffeecan_ok");
  StateGraph g = fixture_graph("coffeecan_ok");
  // depth reported by TLC = number of BFS levels
  std::map<Fingerprint, std::size_t> level;
  std::vector<Fingerprint> frontier = g.initial_ids;
  for (auto id : frontier) level[id] = 1;
  std::size_t levels = 1;
  while (!frontier.empty()) {
    std::vector<Fingerprint> next;
    for (auto id : frontier) {
      for (const auto& e : g.edges) {
        if (e.from == id && !level.contains(e.to)) {
          level[e.to] = level[id] + 1;
          levels = std::max(levels, level[e.to]);
          next.push_back(e.to);
        }
      }
    }
    frontier = next;
  }
  EXPECT_EQ(out.stats.depth, levels);
}

TEST(TlcParser, BuggyRunIsInvariantViolationWithInitialState) {
  auto out = fixture_output("coffeecan_buggy");
  ASSERT_TRUE(out.error.has_value());
  EXPECT_EQ(out.error->category, ErrorCategory::InvariantViolation);
  ASSERT_TRUE(out.error->property_name.has_value());
  EXPECT_EQ(*out.error->property_name, cfg_invariant(model_cfg()));
  ASSERT_TRUE(out.error->trace.has_value());
  const auto& states = out.error->trace->states;
  ASSERT_EQ(states.size(), 2u);
  EXPECT_EQ(states[0].index, 1);
  EXPECT_EQ(states[0].bindings, (Bindings{{"can", kInitialState}}));
  EXPECT_EQ(states[1].action_label, "PickSameColorWhite");
  EXPECT_EQ(states[1].bindings, (Bindings{{"can", kBuggyViolation}}));
  ASSERT_TRUE(states[1].action_location.has_value());
  EXPECT_EQ(*states[1].action_location, make_location("CoffeeCan", 20, 3, 22, 57));
  EXPECT_TRUE(out.trace_block.has_value());
}

TEST(TlcParser, DeadlockRunCarriesTrace) {
  auto out = fixture_output("coffeecan_deadlock");
  ASSERT_TRUE(out.error.has_value());
  EXPECT_EQ(out.error->category, ErrorCategory::Deadlock);
  ASSERT_TRUE(out.error->trace.has_value());
  EXPECT_EQ(out.error->trace->states.back().bindings.at("can"), kTerminalState);
}

TEST(TlcParser, ParseErrorPointsAtSource) {
  auto out = fixture_output("coffeecan_parse");
  ASSERT_TRUE(out.error.has_value());
  EXPECT_EQ(out.error->category, ErrorCategory::ParseError);
  ASSERT_FALSE(out.error->locations.empty());
  EXPECT_EQ(out.error->locations.front().start_line, 10);
  EXPECT_EQ(out.error->locations.front().start_col, 1);
  EXPECT_FALSE(out.error->trace.has_value());
}

TEST(TlcParser, SemanticErrorIsSeparatedFromParseError) {
  auto out = fixture_output("coffeecan_semantic");
  ASSERT_TRUE(out.error.has_value());
  EXPECT_EQ(out.error->category, ErrorCategory::SemanticError);
  EXPECT_FALSE(out.error->locations.empty());
}

TEST(TlcParser, EvaluationErrorHasNestedLocations) {
  auto out = fixture_output("coffeecan_eval");
  ASSERT_TRUE(out.error.has_value());
  EXPECT_EQ(out.error->category, ErrorCategory::EvaluationError);
  ASSERT_FALSE(out.error->locations.empty());
  bool has_line_16 = false;
  for (const auto& l : out.error->locations) has_line_16 |= l.start_line == 16 && l.module == "CoffeeCan";
  EXPECT_TRUE(has_line_16);
}

TEST(TlcParser, ConfigErrorNamesTheProblem) {
  auto out = fixture_output("coffeecan_cfg");
  ASSERT_TRUE(out.error.has_value());
  EXPECT_EQ(out.error->category, ErrorCategory::ConfigError);
  EXPECT_FALSE(out.error->message.empty());
}

TEST(TlcParser, LivenessViolationHasLasso) {
  auto out = fixture_output("toggle_liveness");
  ASSERT_TRUE(out.error.has_value());
  EXPECT_EQ(out.error->category, ErrorCategory::TemporalViolation);
  ASSERT_TRUE(out.error->trace.has_value());
  ASSERT_TRUE(out.error->trace->lasso_start.has_value());
  EXPECT_GE(*out.error->trace->lasso_start, 1);
  EXPECT_LE(*out.error->trace->lasso_start, static_cast<int>(out.error->trace->states.size()));
}

TEST(TlcParser, ViolationCategoriesAlwaysHaveTraces) {
  for (const char* name : {"coffeecan_ok", "coffeecan_buggy", "coffeecan_deadlock", "coffeecan_parse",
                           "coffeecan_eval", "coffeecan_semantic", "coffeecan_cfg", "toggle_liveness"}) {
    auto out = fixture_output(name);
    if (!out.error) continue;
    if (is_violation(out.error->category)) {
      EXPECT_TRUE(out.error->trace.has_value()) << name;
    }
    if (out.error->category == ErrorCategory::InvariantViolation) {
      EXPECT_TRUE(out.error->property_name) << name;
    }
  }
}

TEST(TlcParser, NoFramesIsUnrecognizedFraming) {
  EXPECT_EQ(code_of([] { parse_tool_output("Error: Could not find or load main class tlc2.TLC\n"); }),
            ErrorCode::UnrecognizedFraming);
  EXPECT_EQ(code_of([] { parse_tool_output(""); }), ErrorCode::UnrecognizedFraming);
}

TEST(TlcParser, TotalOnMutatedOutput) {
  std::mt19937_64 rng(7);
  std::vector<std::string> seeds;
  for (const char* name : {"coffeecan_ok", "coffeecan_buggy", "coffeecan_eval", "toggle_liveness", "coffeecan_parse"}) {
    seeds.push_back(fixture_text(std::string(name) + ".out"));
  }
  for (int i = 0; i < 400; ++i) {
    std::string text = seeds[i % seeds.size()];
    std::uniform_int_distribution<std::size_t> pos(0, text.size());
    switch (i % 4) {
      case 0:
        text.resize(pos(rng));
        break;
      case 1:
        for (int k = 0; k < 20 && !text.empty(); ++k) text[pos(rng) % text.size()] = static_cast<char>(rng() & 0xff);
        break;
      case 2: {
        std::size_t a = pos(rng), b = pos(rng);
        if (a > b) std::swap(a, b);
        text.erase(a, b - a);
        break;
      }
      default:
        text.insert(pos(rng), "@!@!@STARTMSG 2217:4 @!@!@\n7: <X>\n/\\ broken");
    }
    try {
      parse_tool_output(text);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::UnrecognizedFraming) << e.what();
    } catch (const std::exception& e) {
      ADD_FAILURE() << "non-library exception: " << e.what();
    }
  }
}

TEST(TlcParser, TraceParsesBothHeaderSpellings) {
  auto a = parse_trace("1: <Initial predicate>\n/\\ x = 1\n/\\ y = \"a\"\n\n2: <Next line 3, col 1 to line 4, col 9 of module M>\n/\\ x = 2\n/\\ y = \"b\"\n");
  auto b = parse_trace("State 1: <Initial predicate>\n/\\ x = 1\n/\\ y = \"a\"\n\nState 2: <Next line 3, col 1 to line 4, col 9 of module M>\n/\\ x = 2\n/\\ y = \"b\"\n");
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.states.size(), 2u);
  EXPECT_EQ(a.states[0].action_label, "Initial predicate");
  EXPECT_EQ(a.states[1].bindings, (Bindings{{"x", "2"}, {"y", "\"b\""}}));
  EXPECT_EQ(*a.states[1].action_location, make_location("M", 3, 1, 4, 9));
}

TEST(TlcParser, TraceLassoMarker) {
  auto t = parse_trace("1: <Initial predicate>\nx = 0\n\n2: <Flip line 5, col 1 to line 5, col 20 of module T>\nx = 1\n\n1: Back to state: <Flip line 5, col 1 to line 5, col 20 of module T>\n");
  ASSERT_TRUE(t.lasso_start.has_value());
  EXPECT_EQ(*t.lasso_start, 1);
  EXPECT_EQ(t.states.size(), 2u);
}

TEST(TlcParser, StateBlockMultilineValues) {
  auto b = parse_state_block("/\\ x = [a |-> 1,\n       b |-> 2]\n/\\ y = {}\n");
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(normalize_value(b.at("x")), "[a |-> 1, b |-> 2]");
  EXPECT_EQ(b.at("y"), "{}");
}

TEST(TlcParser, StateBlockRoundTrip) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> count(1, 5), val(-50, 50);
  for (int i = 0; i < 200; ++i) {
    Bindings b;
    int n = count(rng);
    for (int k = 0; k < n; ++k) {
      b["v" + std::to_string(k)] = k % 2 ? std::to_string(val(rng)) : "<<" + std::to_string(val(rng)) + ", \"s\">>";
    }
    EXPECT_EQ(parse_state_block(render_state_block(b)), b);
  }
}

TEST(TlcParser, MalformedBindingThrows) {
  EXPECT_EQ(code_of([] { parse_state_block("/\\ = 3\n"); }), ErrorCode::MalformedBinding);
}

TEST(TlcParser, LocationSpellings) {
  EXPECT_EQ(parse_location("line 20, col 3 to line 22, col 57 of module CoffeeCan"),
            make_location("CoffeeCan", 20, 3, 22, 57));
  auto found = find_locations("0. Line 15, column 3 to line 17, column 40 in CoffeeCan\nat line 10, column 1", "CoffeeCan");
  ASSERT_EQ(found.size(), 2u);
  EXPECT_EQ(found[0], make_location("CoffeeCan", 15, 3, 17, 40));
  EXPECT_EQ(found[1].start_line, 10);
  EXPECT_EQ(code_of([] { parse_location("nowhere"); }), ErrorCode::MalformedLocation);
  EXPECT_EQ(code_of([] { make_location("M", 5, 1, 4, 1); }), ErrorCode::MalformedLocation);
}

TEST(TlcParser, DotFixtureGraph) {
  StateGraph g = fixture_graph("coffeecan_ok");
  auto out = fixture_output("coffeecan_ok");
  EXPECT_EQ(g.nodes.size(), out.stats.distinct_states);
  ASSERT_EQ(g.initial_ids.size(), 1u);
  EXPECT_EQ(g.nodes.at(g.initial_ids[0]).bindings.at("can"), kInitialState);
  std::size_t terminals = 0;
  for (const auto& [id, node] : g.nodes) {
    if (node.is_terminal) {
      ++terminals;
      EXPECT_EQ(node.bindings.at("can"), kTerminalState);
    }
  }
  EXPECT_EQ(terminals, 1u);
  for (const auto& e : g.edges) {
    EXPECT_TRUE(g.contains(e.from));
    EXPECT_TRUE(g.contains(e.to));
    EXPECT_FALSE(e.action.empty());
  }
}

TEST(TlcParser, DotDropsStutteringLoops) {
  StateGraph g = fixture_graph("toggle_liveness");
  for (const auto& e : g.edges) EXPECT_FALSE(e.action.empty());
}

TEST(TlcParser, DotStrictRejectsDanglingAndTruncated) {
  std::string dot = fixture_text("coffeecan_ok.dot");
  std::string truncated = dot.substr(0, dot.size() / 2);
  EXPECT_EQ(code_of([&] { parse_dot_graph(truncated); }), ErrorCode::DotParseFailure);
  StateGraph partial = parse_dot_graph(truncated, DotParseMode::Partial);
  for (const auto& e : partial.edges) {
    EXPECT_TRUE(partial.contains(e.from));
    EXPECT_TRUE(partial.contains(e.to));
  }
  std::string dangling = "strict digraph DiskGraph {\n1 [label=\"x = 1\",style = filled]\n1 -> 2 [label=\"A\"];\n}\n";
  EXPECT_EQ(code_of([&] { parse_dot_graph(dangling); }), ErrorCode::DanglingEdge);
  EXPECT_EQ(code_of([] { parse_dot_graph("digraph {"); }), ErrorCode::DotParseFailure);
}

TEST(TlcParser, DotEscapes) {
  std::string dot =
      "strict digraph DiskGraph {\n"
      "5 [label=\"/\\\\ s = \\\"a\\\\b\\\"\\n/\\\\ t = 1\",style = filled]\n"
      "}\n";
  StateGraph g = parse_dot_graph(dot);
  ASSERT_EQ(g.nodes.size(), 1u);
  EXPECT_EQ(g.nodes.begin()->second.bindings, (Bindings{{"s", "\"a\\b\""}, {"t", "1"}}));
}

TEST(TlcParser, DotRoundTripOnRandomGraphs) {
  std::mt19937_64 rng(3);
  GraphShape shape;
  shape.max_nodes = 40;
  for (int i = 0; i < 50; ++i) {
    StateGraph g = random_digraph(rng, shape);
    StateGraph back = parse_dot_graph(graph_to_dot(g));
    EXPECT_EQ(back.nodes.size(), g.nodes.size());
    std::multiset<Edge> a(g.edges.begin(), g.edges.end()), b(back.edges.begin(), back.edges.end());
    EXPECT_EQ(a, b);
    EXPECT_EQ(std::set<Fingerprint>(back.initial_ids.begin(), back.initial_ids.end()),
              std::set<Fingerprint>(g.initial_ids.begin(), g.initial_ids.end()));
    for (const auto& [id, node] : g.nodes) EXPECT_EQ(back.nodes.at(id).bindings, node.bindings);
  }
}

TEST(TlcParser, ClassifierFromCustomTable) {
  auto c = MessageClassifier::from_json(R"({"codes": {"4242": "Deadlock"}, "auxiliary": [4243]})");
  EXPECT_EQ(c.classify({4242, 1, "x"}), ErrorCategory::Deadlock);
  EXPECT_TRUE(c.is_auxiliary(4243));
  EXPECT_FALSE(c.classify({2262, 0, "version"}).has_value());
}

TEST(TlcParser, BuiltinClassifierKnowsCoreCodes) {
  const auto& c = MessageClassifier::builtin();
  EXPECT_EQ(c.classify({2110, 1, "Invariant X is violated."}), ErrorCategory::InvariantViolation);
  EXPECT_EQ(c.classify({2114, 1, "Deadlock reached."}), ErrorCategory::Deadlock);
  EXPECT_EQ(c.classify({2116, 1, "Temporal properties were violated."}), ErrorCategory::TemporalViolation);
  EXPECT_TRUE(c.is_auxiliary(2217));
  EXPECT_FALSE(c.classify({2217, 4, "1: <Initial predicate>"}).has_value());
}
