// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace qmem {

/// A value with its 1-sigma uncertainty. `sigma` is statistical (counting);
/// `sigma_syst` holds calibration systematics when a quantity has any.
struct EstimateWithError {
  double value = 0.0;
  double sigma = 0.0;
  double sigma_syst = 0.0;
};

}  // namespace qmem
