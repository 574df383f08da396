#pragma once

#include "spectra_lab/errors.hpp"
#include "spectra_lab/linalg.hpp"
#include "spectra_lab/hamiltonian.hpp"
#include "spectra_lab/entanglement.hpp"
#include "spectra_lab/predictor.hpp"
#include "spectra_lab/relaxation.hpp"
#include "spectra_lab/twolevel.hpp"
#include "spectra_lab/compress.hpp"
#include "spectra_lab/ensembles.hpp"
#include "spectra_lab/cli.hpp"
