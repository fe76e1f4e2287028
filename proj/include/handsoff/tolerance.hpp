#pragma once

namespace handsoff {

// Every numerical threshold used by the library. Passed explicitly; there are
// no global tolerances.
struct ToleranceProfile {
    double lp_feasibility = 1e-9;   // LP constraint satisfaction at an optimum
    double psd = 1e-7;              // min eigenvalue allowance for LMI blocks
    double equality = 1e-8;         // linear equality residual
    double psd_margin = 1e-7;       // strict "> 0" realised as ">= margin * I"
    double set = 1e-8;              // facet slack allowance for set inclusions
    double published = 5e-3;        // allowance for 4-decimal published matrices
    double schur = 1e-9;            // spectral radius must be below 1 - schur
    double rank = 1e-9;             // relative rank threshold (minimal realization)
    double redundancy = 1e-9;       // vertex/facet de-duplication
    double ipm_gap = 1e-10;         // interior-point relative gap / infeasibility target
    double ipm_acceptable = 1e-7;   // accepted level when the interior-point method stalls
    double ipm_inaccurate = 1e-5;   // stalled runs this close are kept if the point is feasible
    int ipm_max_iterations = 200;
};

}  // namespace handsoff
