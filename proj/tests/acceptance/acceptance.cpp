// Runs the acceptance criteria and prints one verdict line per criterion.
// Exit status is 0 only if every selected criterion passed.

#include <chrono>
#include <cstdio>
#include <exception>
#include <map>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "acceptance/criteria.hpp"

int main(int argc, char** argv) {
    CLI::App app{"disco acceptance criteria"};
    std::vector<int> selected;
    std::string cache = "acceptance_cache";
    app.add_option("--criteria", selected, "criterion ids (default: all)")->delimiter(',');
    app.add_option("--cache", cache, "directory for training checkpoints reused between runs");
    CLI11_PARSE(app, argc, argv);

    std::map<int, acceptance::Criterion> all;
    for (auto& c : acceptance::math_criteria()) all.emplace(c.id, c);
    for (auto& c : acceptance::training_criteria()) all.emplace(c.id, c);
    if (selected.empty())
        for (const auto& [id, c] : all) selected.push_back(id);
    for (int id : selected)
        if (!all.count(id)) {
            fmt::print(stderr, "unknown criterion {}\n", id);
            return 2;
        }

    const acceptance::Context ctx{cache};
    int failed = 0;
    for (int id : std::set<int>(selected.begin(), selected.end())) {
        const auto& c = all.at(id);
        const auto t0 = std::chrono::steady_clock::now();
        acceptance::Outcome out;
        try {
            out = c.run(ctx);
        } catch (const std::exception& e) {
            out = {false, fmt::format("threw: {}", e.what())};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_budget = secs <= c.budget_seconds;
        const bool pass = out.pass && in_budget;
        failed += !pass;
        fmt::print("criterion {:>2} {}  {}: {}  [{:.1f} s of {:.0f} s{}]\n", id, pass ? "PASS" : "FAIL", c.title,
                   out.detail, secs, c.budget_seconds, in_budget ? "" : ", over budget");
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
