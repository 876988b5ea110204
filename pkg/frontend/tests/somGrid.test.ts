/** SOM grid rendering model: grayscale mapping and the red node overlays. */

import { describe, expect, it } from 'vitest';

import {
    CURRENT_NODE_COLOR,
    PREVIOUS_NODE_COLOR,
    grayFill,
    somGridCells,
} from '../src/somGrid.js';

describe('gray mapping', () => {
    it('maps -1 to black and +1 to white', () => {
        expect(grayFill(-1)).toBe('#000000');
        expect(grayFill(1)).toBe('#ffffff');
        expect(grayFill(0)).toBe('#808080');
    });

    it('clamps out-of-range values', () => {
        expect(grayFill(-3)).toBe('#000000');
        expect(grayFill(7)).toBe('#ffffff');
    });

    it('is monotonic in the feature value', () => {
        let last = -1;
        for (let v = -1; v <= 1; v += 0.05) {
            const level = parseInt(grayFill(v).slice(1, 3), 16);
            expect(level).toBeGreaterThanOrEqual(last);
            last = level;
        }
    });
});

describe('grid cells', () => {
    const values4x4 = [
        [-1.0, -0.5, 0.0, 0.25],
        [0.5, 0.75, 1.0, -0.25],
        [0.1, 0.2, 0.3, 0.4],
        [-0.9, -0.8, -0.7, -0.6],
    ];

    it('produces one cell per node (4x4 grid: 16 blocks)', () => {
        const cells = somGridCells(values4x4, null, null);
        expect(cells).toHaveLength(16);
        expect(cells[0].fill).toBe('#000000');
        expect(cells[6].fill).toBe('#ffffff');
        expect(cells.map((c) => c.node)).toEqual([...Array(16).keys()]);
    });

    it('marks current bright red and previous dim red', () => {
        const cells = somGridCells(values4x4, 5, 9);
        const current = cells.find((c) => c.node === 5);
        const previous = cells.find((c) => c.node === 9);
        expect(current?.overlay).toBe('current');
        expect(current?.overlayColor).toBe(CURRENT_NODE_COLOR);
        expect(previous?.overlay).toBe('previous');
        expect(previous?.overlayColor).toBe(PREVIOUS_NODE_COLOR);
        expect(cells.filter((c) => c.overlay !== null)).toHaveLength(2);
    });

    it('current wins when current equals previous', () => {
        const cells = somGridCells(values4x4, 3, 3);
        const marked = cells.filter((c) => c.overlay !== null);
        expect(marked).toHaveLength(1);
        expect(marked[0].overlay).toBe('current');
        expect(marked[0].overlayColor).toBe(CURRENT_NODE_COLOR);
    });

    it('renders no overlay when nothing plays', () => {
        const cells = somGridCells(values4x4, null, null);
        expect(cells.every((c) => c.overlay === null)).toBe(true);
    });
});
