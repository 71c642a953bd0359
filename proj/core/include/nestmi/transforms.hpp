#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "nestmi/dataset.hpp"

namespace nestmi {

// Group-level transforms applied before imputation or, more commonly, to each
// imputed dataset. Means use observed cases only, so on completed data they
// are plain group means.

// Appends `out` = per-group observed-case mean of `var`. Groups where `var`
// is entirely missing get a missing mean.
Dataset group_means(const Dataset& d, const std::string& var, const std::string& group,
                    const std::string& out);

// Appends `out` = `var` minus its group mean; missing `var` stays missing.
Dataset center_within_group(const Dataset& d, const std::string& var, const std::string& group,
                            const std::string& out);

enum class TransformOp { GroupMean, CenterWithinGroup };

struct TransformStep {
    TransformOp op;
    std::string var;
    std::string out;
};

// Script grammar: steps separated by ";", each `groupmean(VAR -> OUT)` or
// `cwc(VAR -> OUT)`; whitespace-insensitive; errors carry byte offsets.
std::vector<TransformStep> parse_transform_script(std::string_view text);

std::string transform_script_text(const std::vector<TransformStep>& script);

Dataset apply_transform(const Dataset& d, const TransformStep& step);

// Applies the script independently to every dataset (means are recomputed per
// dataset). A failure reports the dataset index and the offending step.
std::vector<Dataset> apply_to_all(const std::vector<Dataset>& imps,
                                  const std::vector<TransformStep>& script);

}  // namespace nestmi
