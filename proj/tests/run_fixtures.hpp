#pragma once

#include <string>

#include "disco/config.hpp"

namespace testing {

/// A run that trains in well under a second per step.
inline disco::RunConfig tiny_run(const std::string& output_dir) {
    disco::RunConfig c;
    c.output_dir = output_dir;
    c.n_seen = 3;
    c.n_unseen = 2;
    c.samples_per_category = 6;
    c.holdout_fraction = 0.34;
    c.image_size = 8;
    c.downsamples = 1;
    c.content_dim = 4;
    c.style_dim = 3;
    c.codebook_size = 8;
    c.base_channels = 4;
    c.max_channels = 4;
    c.res_blocks = 1;
    c.disc_downsamples = 1;
    c.stage1_batch = 2;
    c.stage1_steps = 4;
    c.ar_layers = 1;
    c.ar_embed = 8;
    c.ar_heads = 2;
    c.stage2_batch = 2;
    c.stage2_steps = 3;
    c.top_k = 8;
    c.classifier_steps = 5;
    c.fewshot_ways = 2;
    c.fewshot_augment = 2;
    c.fewshot_episodes = 2;
    c.eval_per_category = 3;
    c.hshot = "1,2";
    c.log_every = 1;
    c.checkpoint_every = 2;
    return c;
}

}  // namespace testing
