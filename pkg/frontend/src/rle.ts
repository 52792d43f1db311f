/** Row-major run-length label grids as served by the annotation API. */

export interface RleGrid {
  height: number;
  width: number;
  values: number[];
  counts: number[];
}

/**
 * Expand a run-length encoding into a flat row-major Int32Array of length
 * height*width. The segment under pixel (x, y) is `grid[y * width + x]`.
 */
export function decodeRle(rle: RleGrid): Int32Array {
  const { height, width, values, counts } = rle;
  if (height <= 0 || width <= 0) {
    throw new Error(`invalid grid shape ${height}x${width}`);
  }
  if (values.length !== counts.length) {
    throw new Error(
      `values/counts length mismatch: ${values.length} vs ${counts.length}`,
    );
  }
  const total = height * width;
  const grid = new Int32Array(total);
  let at = 0;
  for (let run = 0; run < values.length; run++) {
    const count = counts[run]!;
    const value = values[run]!;
    if (count <= 0) throw new Error(`run ${run} has non-positive count ${count}`);
    if (at + count > total) {
      throw new Error(`runs cover ${at + count} pixels but grid has ${total}`);
    }
    grid.fill(value, at, at + count);
    at += count;
  }
  if (at !== total) {
    throw new Error(`runs cover ${at} pixels but grid has ${total}`);
  }
  return grid;
}

/** Segment id under integer pixel coordinates, or null outside the grid. */
export function segmentAt(
  grid: Int32Array,
  rle: Pick<RleGrid, "height" | "width">,
  x: number,
  y: number,
): number | null {
  const xi = Math.floor(x);
  const yi = Math.floor(y);
  if (xi < 0 || yi < 0 || xi >= rle.width || yi >= rle.height) return null;
  return grid[yi * rle.width + xi]!;
}
