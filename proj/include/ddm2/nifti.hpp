#pragma once

#include <string>

#include "ddm2/volume.hpp"

namespace ddm2 {

/// NIfTI-1 reader (single-file .nii, magic "n+1"). Honors dim[1..4],
/// datatype 16 (float32) and 4 (int16), scl_slope/scl_inter, and
/// byte-swapped headers. Rejects non-4D files.
Volume4D ingest_nifti(const std::string& path);

enum class VolumeFormat { raw_container, nifti1 };

/// Format-dispatching ingest used by the CLI.
Volume4D ingest(const std::string& path, VolumeFormat format);

}  // namespace ddm2
