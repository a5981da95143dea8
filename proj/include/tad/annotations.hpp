#pragma once

#include "tad/segment.hpp"

#include <string>
#include <vector>

namespace tad {

/// Temporal annotations for one video: frame count, frame rate and the
/// class-labeled ground-truth instances in frame units.
struct VideoAnnotation {
  std::string id;
  int num_frames = 0;
  double fps = 25.0;
  std::vector<LabeledSegment> instances;
};

struct AnnotationFile {
  int num_classes = 0;
  std::vector<VideoAnnotation> videos;
};

}  // namespace tad
