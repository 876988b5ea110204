/** Scatter rendering: opacity = frequency mean, size = duration, green selection. */

import { describe, expect, it } from 'vitest';

import { ScatterPoint } from '../src/protocol.js';
import {
    MAX_RADIUS,
    MIN_RADIUS,
    SELECTED_COLOR,
    projectPoints,
    scatterStyles,
} from '../src/scatter.js';

function point(segment: number, overrides: Partial<ScatterPoint> = {}): ScatterPoint {
    return { segment, x: segment * 10, y: segment * 5, opacity: 0.5, size: 0.5, ...overrides };
}

describe('scatter styles', () => {
    it('exactly one green point when a selection exists', () => {
        const styles = scatterStyles([point(0), point(1), point(2)], 1);
        const green = styles.filter((s) => s.color === SELECTED_COLOR);
        expect(green).toHaveLength(1);
        expect(green[0].segment).toBe(1);
        expect(styles.filter((s) => s.selected)).toHaveLength(1);
    });

    it('no green point without a selection', () => {
        const styles = scatterStyles([point(0), point(1)], null);
        expect(styles.every((s) => s.color !== SELECTED_COLOR)).toBe(true);
    });

    it('largest duration gets the largest radius', () => {
        const styles = scatterStyles(
            [point(0, { size: 0.2 }), point(1, { size: 1.0 }), point(2, { size: 0.7 })],
            null,
        );
        const radii = styles.map((s) => s.radius);
        expect(Math.max(...radii)).toBe(styles[1].radius);
        expect(styles[1].radius).toBe(MAX_RADIUS);
        expect(scatterStyles([point(0, { size: 0 })], null)[0].radius).toBe(MIN_RADIUS);
    });

    it('opacity grows with the frequency mean', () => {
        const styles = scatterStyles(
            [point(0, { opacity: 0.0 }), point(1, { opacity: 0.4 }), point(2, { opacity: 1.0 })],
            null,
        );
        expect(styles[0].opacity).toBeLessThan(styles[1].opacity);
        expect(styles[1].opacity).toBeLessThan(styles[2].opacity);
        expect(styles[2].opacity).toBe(1);
        expect(styles[0].opacity).toBeGreaterThan(0); // floor keeps points visible
    });

    it('mid-scale points when the engine reports degenerate ranges', () => {
        // the engine sends 0.5 for constant duration/frequency columns
        const styles = scatterStyles([point(0, { size: 0.5, opacity: 0.5 })], null);
        expect(styles[0].radius).toBeCloseTo((MIN_RADIUS + MAX_RADIUS) / 2, 10);
    });

    it('empty model renders an empty plot', () => {
        expect(scatterStyles([], null)).toEqual([]);
        expect(projectPoints([], 400, 300)).toEqual([]);
    });
});

describe('projection', () => {
    it('maps the value range onto the viewport with margins', () => {
        const styles = scatterStyles([point(0, { x: 0, y: 0 }), point(1, { x: 100, y: 50 })], null);
        const projected = projectPoints(styles, 400, 300, 20);
        expect(projected[0].px).toBe(20);
        expect(projected[1].px).toBe(380);
        // feature y grows upward, pixel y downward
        expect(projected[0].py).toBe(280);
        expect(projected[1].py).toBe(20);
    });

    it('degenerate ranges collapse to the low edge instead of dividing by zero', () => {
        const styles = scatterStyles([point(0, { x: 5, y: 5 }), point(1, { x: 5, y: 5 })], null);
        const projected = projectPoints(styles, 400, 300, 20);
        for (const p of projected) {
            expect(Number.isFinite(p.px)).toBe(true);
            expect(Number.isFinite(p.py)).toBe(true);
        }
    });
});
