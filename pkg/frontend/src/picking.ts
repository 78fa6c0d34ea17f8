/**
 * Pointer-to-tool mapping. The pointer steers the tool across a
 * horizontal travel plane; the wheel moves that plane up and down.
 * Rays that miss the plane (grazing or parallel) yield no update, so a
 * stray pointer cannot teleport the tool.
 */

import * as THREE from "three";

export interface TravelPlane {
  /** Height of the plane along the world z axis. */
  depth: number;
  min: number;
  max: number;
}

export function makeTravelPlane(min: number, max: number, depth: number): TravelPlane {
  return { depth: clamp(depth, min, max), min, max };
}

function clamp(x: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, x));
}

/** Wheel input moves the plane; positive deltaY lowers it. */
export function adjustDepth(plane: TravelPlane, deltaY: number, stepPerNotch: number): TravelPlane {
  const notches = deltaY / 100;
  return {
    ...plane,
    depth: clamp(plane.depth - notches * stepPerNotch, plane.min, plane.max),
  };
}

const _ray = new THREE.Raycaster();
const _plane = new THREE.Plane();
const _hit = new THREE.Vector3();
const _ndc = new THREE.Vector2();

/**
 * Intersect the pointer ray with the travel plane.
 *
 * ndcX/ndcY are normalized device coordinates in [-1, 1]. Returns the
 * world-space tool position, or null when the ray runs away from or
 * parallel to the plane.
 */
export function pointerToProxy(
  camera: THREE.Camera,
  ndcX: number,
  ndcY: number,
  plane: TravelPlane,
): number[] | null {
  _ndc.set(ndcX, ndcY);
  _ray.setFromCamera(_ndc, camera);
  _plane.set(new THREE.Vector3(0, 0, 1), -plane.depth);
  const point = _ray.ray.intersectPlane(_plane, _hit);
  if (point === null) return null;
  return [point.x, point.y, point.z];
}

/** Pixel coordinates relative to a canvas rect, mapped to NDC. */
export function pixelToNdc(
  px: number,
  py: number,
  width: number,
  height: number,
): [number, number] {
  return [(px / width) * 2 - 1, -(py / height) * 2 + 1];
}
