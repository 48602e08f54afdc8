#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sta {

struct TrainingReport {
    std::vector<std::size_t> eval_steps;
    std::vector<double> loss;        // fixed-subset total loss at each eval step
    std::vector<double> batch_loss;  // minibatch loss at each optimizer step
    std::vector<double> recon_loss;  // SAE only: reconstruction term at each eval step
    std::vector<double> mean_l0;     // SAE only: mean active atoms at each eval step
    std::string notes;
};

}  // namespace sta
