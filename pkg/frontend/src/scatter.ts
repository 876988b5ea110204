/**
 * Scatter render model: one styled point per corpus segment. Opacity tracks
 * the frequency mean, radius tracks duration (both arrive pre-scaled to
 * [0, 1] from the engine), and the selected segment turns green.
 */

import { ScatterPoint } from './protocol.js';

export interface ScatterStyle {
    segment: number;
    x: number;
    y: number;
    opacity: number;
    radius: number;
    color: string;
    selected: boolean;
}

export const SELECTED_COLOR = '#00c853';
export const POINT_COLOR = '#d8d8e8';

export const MIN_RADIUS = 2;
export const MAX_RADIUS = 14;
export const MIN_OPACITY = 0.15;

export function scatterStyles(points: ScatterPoint[], selection: number | null): ScatterStyle[] {
    return points.map((p) => {
        const selected = selection !== null && p.segment === selection;
        const clampedOpacity = Math.max(0, Math.min(1, p.opacity));
        const clampedSize = Math.max(0, Math.min(1, p.size));
        return {
            segment: p.segment,
            x: p.x,
            y: p.y,
            opacity: MIN_OPACITY + (1 - MIN_OPACITY) * clampedOpacity,
            radius: MIN_RADIUS + (MAX_RADIUS - MIN_RADIUS) * clampedSize,
            color: selected ? SELECTED_COLOR : POINT_COLOR,
            selected,
        };
    });
}

/** Viewport mapping for a canvas of the given size, with a small margin. */
export function projectPoints(
    styles: ScatterStyle[],
    width: number,
    height: number,
    margin = 24,
): (ScatterStyle & { px: number; py: number })[] {
    if (styles.length === 0) {
        return [];
    }
    const xs = styles.map((s) => s.x);
    const ys = styles.map((s) => s.y);
    const xMin = Math.min(...xs);
    const xMax = Math.max(...xs);
    const yMin = Math.min(...ys);
    const yMax = Math.max(...ys);
    const spanX = xMax - xMin || 1;
    const spanY = yMax - yMin || 1;
    return styles.map((s) => ({
        ...s,
        px: margin + ((s.x - xMin) / spanX) * (width - 2 * margin),
        // screen y grows downward; feature y grows upward
        py: height - margin - ((s.y - yMin) / spanY) * (height - 2 * margin),
    }));
}
