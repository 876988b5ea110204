/**
 * SOM grid render model: normalized feature values map [-1, 1] onto
 * black..white blocks; the playing node carries a bright red overlay, the
 * previously played node a dim one.
 */

export interface GridCell {
    row: number;
    col: number;
    node: number;
    /** grayscale block fill, #000000 (-1) .. #ffffff (+1) */
    fill: string;
    overlay: 'current' | 'previous' | null;
    overlayColor: string | null;
}

export const CURRENT_NODE_COLOR = '#ff2e2e'; // higher luminance red
export const PREVIOUS_NODE_COLOR = '#7a1010'; // lower luminance red

export function grayFill(value: number): string {
    const clamped = Math.max(-1, Math.min(1, value));
    const level = Math.round(((clamped + 1) / 2) * 255);
    const hex = level.toString(16).padStart(2, '0');
    return `#${hex}${hex}${hex}`;
}

export function somGridCells(
    values: number[][],
    current: number | null,
    previous: number | null,
): GridCell[] {
    const cells: GridCell[] = [];
    const cols = values.length > 0 ? values[0].length : 0;
    values.forEach((rowValues, row) => {
        rowValues.forEach((value, col) => {
            const node = row * cols + col;
            let overlay: GridCell['overlay'] = null;
            // the current marker wins when a node is both current and previous
            if (current !== null && node === current) {
                overlay = 'current';
            } else if (previous !== null && node === previous) {
                overlay = 'previous';
            }
            cells.push({
                row,
                col,
                node,
                fill: grayFill(value),
                overlay,
                overlayColor:
                    overlay === 'current'
                        ? CURRENT_NODE_COLOR
                        : overlay === 'previous'
                          ? PREVIOUS_NODE_COLOR
                          : null,
            });
        });
    });
    return cells;
}
