#pragma once

namespace octfusion::detail {

// Corners 0..3 form the z=0 face counter-clockwise from the origin, 4..7 the
// z=1 face. Bit i of a case index is set when corner i is inside.
extern const int kMcEdgeTable[256];
extern const int kMcTriTable[256][16];

}  // namespace octfusion::detail
