/**
 * Three.js view of the session: deformed surface with wetness and
 * contact colouring, the tool sphere, and the travel-plane gizmo.
 * Browser-only; all colour math lives in colors.ts where tests reach it.
 */

import * as THREE from "three";
import { vertexColors } from "./colors.js";
import { TravelPlane } from "./picking.js";
import { MeshData, SnapshotView } from "./state.js";

export class SceneView {
  readonly scene: THREE.Scene;
  readonly camera: THREE.PerspectiveCamera;
  private renderer: THREE.WebGLRenderer;
  private surface: THREE.Mesh | null = null;
  private geometry: THREE.BufferGeometry | null = null;
  private colorScratch: Float32Array | null = null;
  private tool: THREE.Mesh;
  private gizmo: THREE.Mesh;
  private lastStep = -1;

  constructor(canvas: HTMLCanvasElement) {
    this.scene = new THREE.Scene();
    this.scene.background = new THREE.Color(0x10151c);

    this.camera = new THREE.PerspectiveCamera(40, 1, 0.001, 10);
    this.camera.up.set(0, 0, 1);
    this.camera.position.set(0.28, -0.25, 0.22);
    this.camera.lookAt(0.1, 0.04, 0.03);

    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });

    const key = new THREE.DirectionalLight(0xffffff, 2.2);
    key.position.set(0.5, -0.8, 1.0);
    this.scene.add(key);
    const fill = new THREE.DirectionalLight(0x8899bb, 0.8);
    fill.position.set(-0.6, 0.4, 0.3);
    this.scene.add(fill);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.35));

    this.tool = new THREE.Mesh(
      new THREE.SphereGeometry(1, 32, 24),
      new THREE.MeshStandardMaterial({
        color: 0xdde4ee,
        roughness: 0.3,
        metalness: 0.6,
        transparent: true,
        opacity: 0.9,
      }),
    );
    this.tool.visible = false;
    this.scene.add(this.tool);

    this.gizmo = new THREE.Mesh(
      new THREE.PlaneGeometry(1, 1),
      new THREE.MeshBasicMaterial({
        color: 0x3a6ea5,
        transparent: true,
        opacity: 0.08,
        side: THREE.DoubleSide,
        depthWrite: false,
      }),
    );
    this.scene.add(this.gizmo);
  }

  resize(width: number, height: number): void {
    this.renderer.setSize(width, height, false);
    this.camera.aspect = width / height;
    this.camera.updateProjectionMatrix();
  }

  setMesh(mesh: MeshData): void {
    if (this.surface !== null) {
      this.scene.remove(this.surface);
      this.geometry?.dispose();
    }
    const geometry = new THREE.BufferGeometry();
    geometry.setIndex(new THREE.BufferAttribute(mesh.triangles, 1));
    const positions = new THREE.BufferAttribute(mesh.restPositions.slice(), 3);
    positions.setUsage(THREE.DynamicDrawUsage);
    geometry.setAttribute("position", positions);
    this.colorScratch = new Float32Array(mesh.restPositions.length);
    const colors = new THREE.BufferAttribute(this.colorScratch, 3);
    colors.setUsage(THREE.DynamicDrawUsage);
    geometry.setAttribute("color", colors);
    geometry.computeVertexNormals();

    const material = new THREE.MeshStandardMaterial({
      vertexColors: true,
      roughness: 0.75,
      metalness: 0.0,
    });
    this.surface = new THREE.Mesh(geometry, material);
    this.geometry = geometry;
    this.scene.add(this.surface);

    const box = new THREE.Box3().setFromBufferAttribute(positions);
    const center = box.getCenter(new THREE.Vector3());
    this.camera.lookAt(center);
    this.gizmo.scale.set(3 * (box.max.x - box.min.x), 3 * (box.max.y - box.min.y), 1);
    this.gizmo.position.set(center.x, center.y, this.gizmo.position.z);
  }

  setTravelPlane(plane: TravelPlane): void {
    this.gizmo.position.z = plane.depth;
  }

  /** Apply a snapshot; repeated steps leave the frame untouched. */
  update(view: SnapshotView): void {
    if (this.geometry === null || view.step === this.lastStep) return;
    this.lastStep = view.step;

    const positions = this.geometry.getAttribute("position") as THREE.BufferAttribute;
    (positions.array as Float32Array).set(view.positions);
    positions.needsUpdate = true;

    const colors = this.geometry.getAttribute("color") as THREE.BufferAttribute;
    vertexColors(view.wetness, view.highlight, colors.array as Float32Array);
    colors.needsUpdate = true;

    this.geometry.computeVertexNormals();

    if (view.toolPosition !== null) {
      this.tool.visible = true;
      this.tool.position.fromArray(view.toolPosition);
      this.tool.scale.setScalar(view.toolRadius);
    } else {
      this.tool.visible = false;
    }
  }

  render(): void {
    this.renderer.render(this.scene, this.camera);
  }
}
