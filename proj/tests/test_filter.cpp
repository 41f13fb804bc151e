#include <cmath>
#include <random>

#include "doctest.h"
#include "mmog/common/error.hpp"
#include "sim_fixture.hpp"

using namespace testing;
using transport::FieldKind;

namespace {

TypeDescriptor xy_type() { return TypeDescriptor({{"x", FieldKind::I64}, {"y", FieldKind::U32}}, {"x"}); }

TypeDescriptor entity_type() {
  return TypeDescriptor({{"id", FieldKind::U64},
                         {"region", FieldKind::U32},
                         {"speed", FieldKind::F64},
                         {"name", FieldKind::String},
                         {"alive", FieldKind::Bool}},
                        {"id"});
}

std::pair<Errc, std::size_t> error_of(std::string_view text, const TypeDescriptor& t) {
  try {
    parse_filter(text, t);
  } catch (const Error& e) {
    return {e.code(), e.offset().value_or(SIZE_MAX)};
  }
  FAIL("parsed: " << text);
  return {Errc::Precondition, 0};
}

// Independent reference: a tiny AST rendered to text and evaluated directly.
struct Ref {
  enum Kind { Or, And, Not, Cmp } kind;
  std::vector<Ref> kids;
  int field = 0;  // 0 = x, 1 = y
  int op = 0;
  std::int64_t lit = 0;

  std::string text() const {
    static const char* ops[] = {"==", "!=", "<", "<=", ">", ">="};
    switch (kind) {
      case Cmp: return std::string(field ? "y" : "x") + " " + ops[op] + " " + std::to_string(lit);
      case Not: return "NOT (" + kids[0].text() + ")";
      default: {
        std::string s = "(" + kids[0].text() + ")";
        for (std::size_t i = 1; i < kids.size(); ++i) s += (kind == Or ? " or (" : " AND (") + kids[i].text() + ")";
        return s;
      }
    }
  }

  bool eval(std::int64_t x, std::int64_t y) const {
    switch (kind) {
      case Cmp: {
        const std::int64_t v = field ? y : x;
        switch (op) {
          case 0: return v == lit;
          case 1: return v != lit;
          case 2: return v < lit;
          case 3: return v <= lit;
          case 4: return v > lit;
          default: return v >= lit;
        }
      }
      case Not: return !kids[0].eval(x, y);
      case And: {
        bool r = true;
        for (auto& k : kids) r = r && k.eval(x, y);
        return r;
      }
      default: {
        bool r = false;
        for (auto& k : kids) r = r || k.eval(x, y);
        return r;
      }
    }
  }
};

Ref random_ref(std::mt19937_64& rng, int depth) {
  auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); };
  Ref r;
  if (depth == 0 || pick(3) == 0) {
    r.kind = Ref::Cmp;
    r.field = pick(2);
    r.op = pick(6);
    r.lit = pick(7) - 1;
    return r;
  }
  r.kind = static_cast<Ref::Kind>(pick(3));
  const int n = r.kind == Ref::Not ? 1 : 2 + pick(2);
  for (int i = 0; i < n; ++i) r.kids.push_back(random_ref(rng, depth - 1));
  return r;
}

}  // namespace

TEST_CASE("filter examples") {
  auto t = entity_type();
  auto e = parse_filter("region == 5", t);
  auto& root = e.nodes()[e.root()];
  CHECK(root.kind == FilterExpression::Node::Kind::Cmp);
  CHECK(root.field == 1);
  CHECK(root.op == CmpOp::Eq);
  CHECK(compare_value(std::uint32_t{5}, root.literal) == 0);

  auto o = parse_filter("region == 5 OR region == 6", t);
  CHECK(o.nodes()[o.root()].kind == FilterExpression::Node::Kind::Or);
  CHECK(o.nodes()[o.root()].children.size() == 2);

  FieldValues s5{std::uint64_t{1}, std::uint32_t{5}, 0.0, std::string("n"), true};
  FieldValues s6{std::uint64_t{1}, std::uint32_t{6}, 0.0, std::string("n"), true};
  CHECK(e.eval(s5));
  CHECK_FALSE(e.eval(s6));

  auto xr = parse_filter("x > 1 AND x < 3", xy_type());
  std::vector<bool> got;
  for (std::int64_t x : {0, 2, 4}) got.push_back(xr.eval({x, std::uint32_t{0}}));
  CHECK(got == std::vector<bool>{false, true, false});
}

TEST_CASE("filter type and parse errors") {
  auto t = entity_type();
  CHECK(error_of("name < 3", t).first == Errc::TypeError);
  CHECK(error_of("name < 'a'", t).first == Errc::TypeError);
  CHECK(error_of("region == 'a'", t).first == Errc::TypeError);
  CHECK(error_of("alive == 1", t).first == Errc::TypeError);
  CHECK(error_of("nosuch == 1", t).first == Errc::TypeError);
  CHECK(error_of("Region == 1", t).first == Errc::TypeError);

  CHECK(error_of("region == ", t) == std::pair{Errc::ParseError, std::size_t{10}});
  CHECK(error_of("region = 5", t) == std::pair{Errc::ParseError, std::size_t{7}});
  CHECK(error_of("(region == 5", t) == std::pair{Errc::ParseError, std::size_t{12}});
  CHECK(error_of("region == 5 extra", t).first == Errc::ParseError);
  CHECK(error_of("region == region", t).first == Errc::ParseError);
  CHECK(error_of("name == 'open", t).first == Errc::ParseError);
  CHECK(error_of("", t).first == Errc::ParseError);
}

TEST_CASE("filter literals and keywords") {
  auto t = entity_type();
  FieldValues v{std::uint64_t{18446744073709551615ull}, std::uint32_t{3}, 2.5, std::string("it's"), false};
  CHECK(parse_filter("name == 'it''s'", t).eval(v));
  CHECK(parse_filter("not alive == true and speed >= 2.5", t).eval(v));
  CHECK(parse_filter("id == 18446744073709551615", t).eval(v));
  CHECK(parse_filter("id > -1", t).eval(v));
  CHECK_FALSE(parse_filter("region < -1", t).eval(v));
  CHECK(parse_filter("speed > 2", t).eval(v));
  CHECK(parse_filter("region >= 0", t).eval(v));

  FieldValues nan{std::uint64_t{1}, std::uint32_t{0}, std::nan(""), std::string(), true};
  CHECK_FALSE(parse_filter("speed == 1.0", t).eval(nan));
  CHECK_FALSE(parse_filter("speed < 1.0", t).eval(nan));
  CHECK(parse_filter("speed != 1.0", t).eval(nan));

  auto e = parse_filter("region == 1 OR NOT (name != 'a' AND alive == false)", t);
  auto again = parse_filter(e.to_string(t), t);
  CHECK(again.nodes().size() == e.nodes().size());
  CHECK(again.to_string(t) == e.to_string(t));
}

TEST_CASE("filter evaluation matches a brute-force truth table") {
  std::mt19937_64 rng(7);
  auto t = xy_type();
  for (int i = 0; i < 2000; ++i) {
    auto ref = random_ref(rng, 3);
    auto text = ref.text();
    auto e = parse_filter(text, t);
    for (std::int64_t x = -2; x <= 6; ++x)
      for (std::int64_t y = 0; y <= 6; ++y) {
        INFO(text << " at x=" << x << " y=" << y);
        REQUIRE(e.eval({x, static_cast<std::uint32_t>(y)}) == ref.eval(x, y));
      }
  }
}

TEST_CASE("filtered reader receives exactly the matching samples") {
  for (auto reliability : {Reliability::BestEffort, Reliability::Reliable}) {
    SimDomain d;
    auto& a = d.add();
    auto& b = d.add();
    QosProfile q;
    q.reliability = reliability;
    q.history = History::keep_all();
    auto ta = a.create_topic("e", entity_type());
    auto tb = b.create_topic("e", entity_type());
    auto w = a.create_publisher().create_writer(ta, q);
    auto r = b.create_subscriber().create_reader(b.create_content_filtered_topic(tb, "region == 5"), q);
    REQUIRE(d.run_until([&] { return w.matched_reader_count() == 1 && r.matched_writer_count() == 1; }, 1000));

    std::mt19937_64 rng(100);
    std::uint64_t expected = 0;
    for (std::uint64_t i = 0; i < 100; ++i) {
      const auto region = static_cast<std::uint32_t>(rng() % 16);
      expected += region == 5;
      w.write({i, region, 1.0, std::string("e"), true});
      d.step();
    }
    d.run_ms(500);
    auto got = r.take();
    CHECK(got.size() == expected);
    for (auto& s : got) CHECK(std::get<std::uint32_t>(s.values[1]) == 5);
  }
}
