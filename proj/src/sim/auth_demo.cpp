#include <fstream>
#include <sstream>

#include "mmog/common/error.hpp"
#include "mmog/services/auth.hpp"
#include "mmog/sim/harness.hpp"

namespace mmog::sim {

using services::Date;

std::vector<AuthTrial> default_auth_trials() {
  const std::string good = "4111111111111111", declined = "5555555555554444";
  return {
      {"user ok, card ok", "Max", "game123", good, "12/2016", "01/15/2014", true, ""},
      {"user bad, card ok", "Max", "wrong", good, "12/2016", "01/15/2014", false, "USER_CHECK_FAILED"},
      {"user ok, card bad", "Max", "game123", declined, "12/2016", "01/15/2014", false, "CARD_CHECK_FAILED"},
      {"user bad, card bad", "Max", "wrong", declined, "12/2016", "01/15/2014", false, "USER_CHECK_FAILED"},
      {"unknown login", "Nobody", "game123", good, "12/2016", "01/15/2014", false, "USER_CHECK_FAILED"},
      {"expired account", "John123", "helloworld", good, "12/2016", "01/15/2014", false, "USER_CHECK_FAILED"},
      {"account on its last day", "Max", "game123", good, "12/2016", "09/10/2014", true, ""},
      {"account past expiration", "Max", "game123", good, "12/2016", "09/11/2014", false, "USER_CHECK_FAILED"},
      {"expired card", "Max", "game123", "4012888888881881", "01/2012", "01/15/2014", false, "CARD_CHECK_FAILED"},
      {"luhn-invalid card", "Max", "game123", "4111111111111112", "12/2016", "01/15/2014", false,
       "CARD_CHECK_FAILED"},
  };
}

ScenarioResult run_auth_demo(const std::filesystem::path& accounts_path, const std::filesystem::path& cards_path,
                             const std::filesystem::path& process_path, const std::vector<AuthTrial>& trials) {
  const auto wall_start = std::chrono::steady_clock::now();
  services::AccountStore accounts;
  services::CardStore cards;
  try {
    if (accounts_path.extension() == ".sql") {
      std::ifstream in(accounts_path);
      if (!in) throw Error(Errc::FixtureError, "cannot open " + accounts_path.string());
      std::stringstream ss;
      ss << in.rdbuf();
      accounts.load_sql_script(ss.str());
    } else {
      accounts.load_jsonl(accounts_path);
    }
    cards.load_jsonl(cards_path);
  } catch (const Error& e) {
    if (e.code() == Errc::FixtureError) throw;
    throw Error(Errc::FixtureError, accounts_path.string() + ": " + e.what());
  }
  const auto def = services::ProcessDefinition::load(process_path.string());

  OrderedJson rows = OrderedJson::array();
  std::vector<std::string> failed;
  for (const auto& t : trials) {
    ManualClock clock(Date::parse(t.service_date).end_us() - 86'400'000'000);
    services::PortBindings bindings{{"UserCheck", services::user_check_port(accounts, clock)},
                                    {"CardCheck", services::card_check_port(cards, clock)}};
    const services::Json input = {{"user_login", t.user_login},
                                  {"password", t.password},
                                  {"card_number", t.card_number},
                                  {"card_expiry", t.card_expiry}};
    auto r = services::run_process(def, input, bindings);
    const bool approved = r.output.value("approved", false);
    const std::string reason = r.output.value("reason", "");
    const bool both_ran = r.ran("check_user") && r.ran("check_card");
    const bool passed = approved == t.expect_approved && reason == t.expect_reason && both_ran;
    if (!passed) failed.push_back("trial: " + t.label);
    OrderedJson row;
    row["trial"] = t.label;
    row["user_login"] = t.user_login;
    row["card_number"] = t.card_number.size() > 4 ? "*" + t.card_number.substr(t.card_number.size() - 4) : "*";
    row["service_date"] = t.service_date;
    row["approved"] = approved;
    row["reason"] = approved ? OrderedJson(nullptr) : OrderedJson(reason);
    row["privilege"] = approved ? OrderedJson(r.output.value("privilege", "")) : OrderedJson(nullptr);
    row["both_checks_ran"] = both_ran;
    row["passed"] = passed;
    rows.push_back(std::move(row));
  }
  ScenarioResult out;
  out.report["auth_demo"] = {{"accounts", accounts.size()}, {"cards", cards.size()}, {"trials", rows.size()}};
  out.report["trials"] = rows;
  out.report["passed"] = failed.empty();
  out.failed_assertions = failed;
  out.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return out;
}

}  // namespace mmog::sim
