/** Cursor-to-world math. The server owns selection membership; the client
 * only converts screen gestures into world-space rays and selector centers.
 */

import type { CameraPose, Vec3 } from "./camera.js";

export interface PerspectiveParams {
  fovYRadians: number;
  aspect: number;
}

function sub(a: Vec3, b: Vec3): Vec3 {
  return { x: a.x - b.x, y: a.y - b.y, z: a.z - b.z };
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return {
    x: a.y * b.z - a.z * b.y,
    y: a.z * b.x - a.x * b.z,
    z: a.x * b.y - a.y * b.x,
  };
}

function normalize(v: Vec3): Vec3 {
  const n = Math.hypot(v.x, v.y, v.z);
  if (n === 0) throw new Error("cannot normalize zero vector");
  return { x: v.x / n, y: v.y / n, z: v.z / n };
}

/** Ray through normalized device coordinates (-1..1, y up). */
export function rayThroughNdc(
  pose: CameraPose,
  params: PerspectiveParams,
  ndcX: number,
  ndcY: number,
): { origin: number[]; direction: number[] } {
  const forward = normalize(sub(pose.target, pose.position));
  const right = normalize(cross(forward, pose.up));
  const trueUp = cross(right, forward);
  const halfH = Math.tan(params.fovYRadians / 2);
  const halfW = halfH * params.aspect;
  const direction = normalize({
    x: forward.x + ndcX * halfW * right.x + ndcY * halfH * trueUp.x,
    y: forward.y + ndcX * halfW * right.y + ndcY * halfH * trueUp.y,
    z: forward.z + ndcX * halfW * right.z + ndcY * halfH * trueUp.z,
  });
  return {
    origin: [pose.position.x, pose.position.y, pose.position.z],
    direction: [direction.x, direction.y, direction.z],
  };
}

/** Selector center: the point on the ray at the camera-target depth. */
export function selectorCenter(
  pose: CameraPose,
  ray: { origin: number[]; direction: number[] },
): number[] {
  const depth = Math.hypot(
    pose.target.x - pose.position.x,
    pose.target.y - pose.position.y,
    pose.target.z - pose.position.z,
  );
  return [
    ray.origin[0] + depth * ray.direction[0],
    ray.origin[1] + depth * ray.direction[1],
    ray.origin[2] + depth * ray.direction[2],
  ];
}

/** Screen pixel to NDC, given canvas size in CSS pixels. */
export function pixelToNdc(px: number, py: number, width: number, height: number): [number, number] {
  return [(px / width) * 2 - 1, 1 - (py / height) * 2];
}

/** World units per pixel at the target depth (for 2D picking radii). */
export function worldPerPixel(
  params: PerspectiveParams,
  distance: number,
  heightPx: number,
): number {
  return (2 * distance * Math.tan(params.fovYRadians / 2)) / heightPx;
}
