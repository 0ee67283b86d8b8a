/** Orbit camera rig as pure math so interaction logic is testable headless.
 *
 * The rig tracks a look-at target, yaw/pitch angles, and distance; it never
 * talks to the server (camera motion is purely client-side).
 */

export interface Vec3 {
  x: number;
  y: number;
  z: number;
}

export interface CameraPose {
  position: Vec3;
  target: Vec3;
  up: Vec3;
}

const PITCH_LIMIT = Math.PI / 2 - 1e-3;

export class OrbitRig {
  yaw = Math.PI / 4;
  pitch = Math.PI / 6;
  distance: number;
  target: Vec3;
  /** 2D mode locks pitch/yaw and interprets "orbit" as pan. */
  planar = false;

  constructor(target: Vec3 = { x: 0, y: 0, z: 0 }, distance = 10) {
    this.target = { ...target };
    this.distance = distance;
  }

  pose(): CameraPose {
    if (this.planar) {
      return {
        position: { x: this.target.x, y: this.target.y, z: this.target.z + this.distance },
        target: { ...this.target },
        up: { x: 0, y: 1, z: 0 },
      };
    }
    const cp = Math.cos(this.pitch);
    return {
      position: {
        x: this.target.x + this.distance * cp * Math.sin(this.yaw),
        y: this.target.y + this.distance * Math.sin(this.pitch),
        z: this.target.z + this.distance * cp * Math.cos(this.yaw),
      },
      target: { ...this.target },
      up: { x: 0, y: 1, z: 0 },
    };
  }

  orbit(dYaw: number, dPitch: number): void {
    if (this.planar) return;
    this.yaw = (this.yaw + dYaw) % (2 * Math.PI);
    this.pitch = Math.min(PITCH_LIMIT, Math.max(-PITCH_LIMIT, this.pitch + dPitch));
  }

  /** Pan in the camera's screen plane by world-space deltas. */
  pan(dxWorld: number, dyWorld: number): void {
    if (this.planar) {
      this.target.x -= dxWorld;
      this.target.y += dyWorld;
      return;
    }
    const right = { x: Math.cos(this.yaw), y: 0, z: -Math.sin(this.yaw) };
    const cp = Math.cos(this.pitch);
    const sp = Math.sin(this.pitch);
    const upish = {
      x: -sp * Math.sin(this.yaw),
      y: cp,
      z: -sp * Math.cos(this.yaw),
    };
    this.target.x += -dxWorld * right.x + dyWorld * upish.x;
    this.target.y += -dxWorld * right.y + dyWorld * upish.y;
    this.target.z += -dxWorld * right.z + dyWorld * upish.z;
  }

  zoom(factor: number): void {
    this.distance = Math.max(1e-3, this.distance * factor);
  }

  /** Frame a bounding box: center the target and back off proportionally. */
  frame(min: Vec3, max: Vec3): void {
    this.target = {
      x: (min.x + max.x) / 2,
      y: (min.y + max.y) / 2,
      z: (min.z + max.z) / 2,
    };
    const span = Math.max(max.x - min.x, max.y - min.y, max.z - min.z, 1e-6);
    this.distance = span * 1.6;
  }
}
