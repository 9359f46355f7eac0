#pragma once

#include <string>

#include "npmle/density.hpp"
#include "npmle/kernel.hpp"
#include "npmle/mixing.hpp"
#include "npmle/npmle.hpp"

namespace npmle {

// JSON documents carry "v": 1 and a "type" tag; readers reject anything else.
//   kernel:      {"v":1,"type":"kernel","d":..,"b":..,"theta_lo":[..],"theta_hi":[..]}
//   mixing:      {"v":1,"type":"mixing","atoms":[[..],..],"weights":[..]}
//   uniform:     {"v":1,"type":"uniform","lo":[..],"hi":[..]}
//   certificate: {"v":1,"type":"certificate","loglik":..,"gap":..,...}
//   bound:       {"v":1,"type":"chi_square_bounds",...}
std::string kernel_to_json(const KernelSpec& k);
KernelSpec kernel_from_json(const std::string& text);

std::string mixing_to_json(const DiscreteMixing& g);
// A fitted model: the mixing document with the certificate embedded.
std::string fit_to_json(const NpmleFit& fit);
std::string certificate_to_json(const Certificate& c);
Certificate certificate_from_json(const std::string& text);
std::string bounds_to_json(const SeriesBound& b);

// Accepts "mixing" and "uniform" documents.
MixingDescriptor descriptor_from_json(const std::string& text);
// "uniform" documents are discretized on `atoms` quantile atoms.
DiscreteMixing mixing_from_json(const std::string& text, int atoms = 512);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

KernelSpec load_kernel(const std::string& path);
MixingDescriptor load_descriptor(const std::string& path);
DiscreteMixing load_mixing(const std::string& path, int atoms = 512);

}  // namespace npmle
