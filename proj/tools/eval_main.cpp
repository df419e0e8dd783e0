// tools/eval_main.cpp
//
// Segmentation scoring: boundary precision/recall/F within a time tolerance
// plus token/type scores and the type-token ratio. Plain (untimed) word
// files are scored on symbolic token positions at tolerance 0.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "uws/corpus.hpp"
#include "uws/eval.hpp"

int main(int argc, char **argv) {
  CLI::App app{"word segmentation scoring"};
  std::string hyp_path, gold_path, report_path;
  double tolerance_ms = 20.0;
  app.add_option("--hyp", hyp_path, "hypothesis word file")->required();
  app.add_option("--gold", gold_path, "gold word file")->required();
  app.add_option("--tolerance-ms", tolerance_ms, "boundary match tolerance");
  app.add_option("--report", report_path, "JSON report path")->required();
  CLI11_PARSE(app, argc, argv);

  try {
    const auto hyp = uws::read_segmentation_file(hyp_path);
    const auto gold = uws::read_segmentation_file(gold_path);
    const uws::BoundaryReport br =
        uws::boundary_score(hyp, gold, tolerance_ms / 1000.0);
    const uws::TypeReport tr = uws::token_type_score(hyp, gold);

    auto prf = [](const uws::PrfCounts &c) {
      return nlohmann::json{{"precision", c.precision()},
                            {"recall", c.recall()},
                            {"fscore", c.fscore()},
                            {"hits", c.hits},
                            {"hyp", c.hyp},
                            {"gold", c.gold}};
    };
    nlohmann::json doc;
    doc["boundary"] = prf(br.counts);
    doc["token"] = prf(tr.token_counts);
    doc["type"] = prf(tr.type_counts);
    doc["type_token_ratio"] = tr.type_token_ratio;
    nlohmann::json per;
    for (const auto &[id, c] : br.per_utterance) per[id] = prf(c);
    doc["per_utterance_boundary"] = per;

    std::ofstream out(report_path);
    out << doc.dump(2) << "\n";
    std::cout << "boundary P " << br.precision() << " R " << br.recall()
              << " F " << br.fscore() << "\n"
              << "token F " << tr.token_counts.fscore() << ", type F "
              << tr.type_counts.fscore() << ", TTR " << tr.type_token_ratio
              << "\n";
  } catch (const std::exception &e) {
    std::cerr << "eval: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
