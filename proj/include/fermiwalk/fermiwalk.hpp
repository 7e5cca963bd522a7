// Convenience umbrella: pulls in the whole library.
#pragma once

#include "fermiwalk/common.hpp"
#include "fermiwalk/experiment.hpp"
#include "fermiwalk/fock.hpp"
#include "fermiwalk/model.hpp"
#include "fermiwalk/onebody.hpp"
#include "fermiwalk/ris.hpp"
#include "fermiwalk/shift_exact.hpp"
#include "fermiwalk/spectral.hpp"
#include "fermiwalk/twobody.hpp"
#include "fermiwalk/walks.hpp"
#include "fermiwalk/wedge.hpp"
