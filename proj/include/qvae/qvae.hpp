#pragma once

#include "qvae/binio.hpp"
#include "qvae/config.hpp"
#include "qvae/cvae.hpp"
#include "qvae/dataset.hpp"
#include "qvae/dmrg.hpp"
#include "qvae/error.hpp"
#include "qvae/estimators.hpp"
#include "qvae/lanczos.hpp"
#include "qvae/linalg.hpp"
#include "qvae/measure.hpp"
#include "qvae/mlp.hpp"
#include "qvae/mps.hpp"
#include "qvae/pipeline.hpp"
#include "qvae/povm.hpp"
#include "qvae/report.hpp"
#include "qvae/rng.hpp"
#include "qvae/sampler.hpp"
#include "qvae/tensor.hpp"
#include "qvae/tfi.hpp"
