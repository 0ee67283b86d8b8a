/** Point-cloud scene on three.js. Geometry assembly is pure and testable;
 * WebGL is only touched when a real canvas is attached. */

import * as THREE from "three";

import type { PointCloud } from "./spwp.js";
import { OrbitRig } from "./camera.js";
import { colorBuffer } from "./colors.js";

/** Row-major stream coords to xyz positions (2D layouts get z = 0). */
export function positionsFrom(cloud: PointCloud): Float32Array {
  const positions = new Float32Array(cloud.count * 3);
  for (let i = 0; i < cloud.count; i++) {
    positions[i * 3] = cloud.coords[i * cloud.outDim];
    positions[i * 3 + 1] = cloud.coords[i * cloud.outDim + 1];
    positions[i * 3 + 2] = cloud.outDim === 3 ? cloud.coords[i * cloud.outDim + 2] : 0;
  }
  return positions;
}

export function boundsOf(positions: Float32Array): {
  min: { x: number; y: number; z: number };
  max: { x: number; y: number; z: number };
} {
  const min = { x: Infinity, y: Infinity, z: Infinity };
  const max = { x: -Infinity, y: -Infinity, z: -Infinity };
  for (let i = 0; i < positions.length; i += 3) {
    min.x = Math.min(min.x, positions[i]);
    min.y = Math.min(min.y, positions[i + 1]);
    min.z = Math.min(min.z, positions[i + 2]);
    max.x = Math.max(max.x, positions[i]);
    max.y = Math.max(max.y, positions[i + 1]);
    max.z = Math.max(max.z, positions[i + 2]);
  }
  return { min, max };
}

export interface SceneHandles {
  scene: THREE.Scene;
  camera: THREE.PerspectiveCamera;
  points: THREE.Points | null;
  queryMarker: THREE.Mesh;
  selectorMesh: THREE.Mesh;
}

/** Build the scene graph; no renderer involved, so this runs headless. */
export function buildScene(fovY = 60, aspect = 16 / 9): SceneHandles {
  const scene = new THREE.Scene();
  scene.background = new THREE.Color(0x101216);
  const camera = new THREE.PerspectiveCamera(fovY, aspect, 0.01, 10_000);

  const queryMarker = new THREE.Mesh(
    new THREE.OctahedronGeometry(1),
    new THREE.MeshBasicMaterial({ color: 0xffffff, wireframe: true }),
  );
  queryMarker.visible = false;
  scene.add(queryMarker);

  const selectorMesh = new THREE.Mesh(
    new THREE.SphereGeometry(1, 24, 16),
    new THREE.MeshBasicMaterial({
      color: 0x4da3ff,
      transparent: true,
      opacity: 0.18,
      depthWrite: false,
    }),
  );
  selectorMesh.visible = false;
  scene.add(selectorMesh);

  return { scene, camera, points: null, queryMarker, selectorMesh };
}

export function setPoints(
  handles: SceneHandles,
  cloud: PointCloud,
  labelOf: (row: number) => number | undefined,
  pointScale: number,
): Float32Array {
  if (handles.points) {
    handles.scene.remove(handles.points);
    handles.points.geometry.dispose();
    (handles.points.material as THREE.Material).dispose();
    handles.points = null;
  }
  const positions = positionsFrom(cloud);
  const geometry = new THREE.BufferGeometry();
  geometry.setAttribute("position", new THREE.BufferAttribute(positions, 3));
  geometry.setAttribute(
    "color",
    new THREE.BufferAttribute(colorBuffer(cloud.count, labelOf), 3),
  );
  const bounds = boundsOf(positions);
  const span = Math.max(
    bounds.max.x - bounds.min.x,
    bounds.max.y - bounds.min.y,
    bounds.max.z - bounds.min.z,
    1e-6,
  );
  const material = new THREE.PointsMaterial({
    size: (span / 220) * pointScale,
    vertexColors: true,
    sizeAttenuation: true,
  });
  handles.points = new THREE.Points(geometry, material);
  handles.scene.add(handles.points);
  return positions;
}

export function recolor(
  handles: SceneHandles,
  count: number,
  labelOf: (row: number) => number | undefined,
): void {
  if (!handles.points) return;
  const attr = handles.points.geometry.getAttribute("color") as THREE.BufferAttribute;
  attr.copyArray(colorBuffer(count, labelOf));
  attr.needsUpdate = true;
}

export function applyPose(handles: SceneHandles, rig: OrbitRig): void {
  const pose = rig.pose();
  handles.camera.position.set(pose.position.x, pose.position.y, pose.position.z);
  handles.camera.up.set(pose.up.x, pose.up.y, pose.up.z);
  handles.camera.lookAt(pose.target.x, pose.target.y, pose.target.z);
  handles.camera.updateMatrixWorld(true);
}

export function placeQueryMarker(
  handles: SceneHandles,
  position: number[] | null,
  scale: number,
): void {
  if (!position) {
    handles.queryMarker.visible = false;
    return;
  }
  handles.queryMarker.visible = true;
  handles.queryMarker.position.set(position[0], position[1], position[2] ?? 0);
  handles.queryMarker.scale.setScalar(scale);
}

export function placeSelector(
  handles: SceneHandles,
  center: number[] | null,
  radius: number,
): void {
  if (!center) {
    handles.selectorMesh.visible = false;
    return;
  }
  handles.selectorMesh.visible = true;
  handles.selectorMesh.position.set(center[0], center[1], center[2] ?? 0);
  handles.selectorMesh.scale.setScalar(radius);
}
