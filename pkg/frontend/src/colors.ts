/** Label palette. Unlabeled records stay a dim gray so annotated structure
 * pops visually. */

export const UNLABELED: [number, number, number] = [0.42, 0.44, 0.48];

const PALETTE: [number, number, number][] = [
  [0.91, 0.31, 0.25],
  [0.22, 0.56, 0.92],
  [0.31, 0.76, 0.38],
  [0.95, 0.69, 0.15],
  [0.65, 0.37, 0.88],
  [0.18, 0.74, 0.73],
  [0.93, 0.41, 0.66],
  [0.58, 0.64, 0.14],
  [0.95, 0.48, 0.09],
  [0.41, 0.49, 0.94],
];

export function labelColor(index: number): [number, number, number] {
  return PALETTE[index % PALETTE.length];
}

/** Flat RGB buffer for a point cloud given per-record label indices. */
export function colorBuffer(
  count: number,
  labelOf: (row: number) => number | undefined,
): Float32Array {
  const colors = new Float32Array(count * 3);
  for (let i = 0; i < count; i++) {
    const label = labelOf(i);
    const [r, g, b] = label === undefined ? UNLABELED : labelColor(label);
    colors[i * 3] = r;
    colors[i * 3 + 1] = g;
    colors[i * 3 + 2] = b;
  }
  return colors;
}
