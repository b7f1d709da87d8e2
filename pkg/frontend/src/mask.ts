// Binary mask layer: brush painting with undo, RLE serialization, and the
// exact hash/PNG forms the backend expects.

import { bytesToBase64, encodeGrayPng } from "./png.js";

export class MaskLayer {
  readonly width: number;
  readonly height: number;
  private grid: Uint8Array;
  private undoStack: Uint8Array[] = [];

  constructor(width: number, height: number) {
    if (width < 1 || height < 1) {
      throw new Error(`bad mask size ${width}x${height}`);
    }
    this.width = width;
    this.height = height;
    this.grid = new Uint8Array(width * height);
  }

  get(x: number, y: number): boolean {
    return this.grid[y * this.width + x] === 1;
  }

  count(): number {
    let n = 0;
    for (const v of this.grid) n += v;
    return n;
  }

  isEmpty(): boolean {
    return this.count() === 0;
  }

  snapshot(): Uint8Array {
    return this.grid.slice();
  }

  /** Push current state so the next stroke can be undone. */
  beginStroke(): void {
    this.undoStack.push(this.grid.slice());
    if (this.undoStack.length > 64) this.undoStack.shift();
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.grid = prev;
    return true;
  }

  paintDot(cx: number, cy: number, radius: number, erase = false): void {
    const r2 = radius * radius;
    const lo = Math.floor(-radius);
    const hi = Math.ceil(radius);
    for (let dy = lo; dy <= hi; dy++) {
      for (let dx = lo; dx <= hi; dx++) {
        if (dx * dx + dy * dy > r2) continue;
        const x = cx + dx;
        const y = cy + dy;
        if (x < 0 || y < 0 || x >= this.width || y >= this.height) continue;
        this.grid[y * this.width + x] = erase ? 0 : 1;
      }
    }
  }

  /** Interpolated stroke segment so fast drags leave no gaps. */
  paintLine(x0: number, y0: number, x1: number, y1: number, radius: number,
            erase = false): void {
    const steps = Math.max(Math.abs(x1 - x0), Math.abs(y1 - y0), 1);
    for (let k = 0; k <= steps; k++) {
      const x = Math.round(x0 + ((x1 - x0) * k) / steps);
      const y = Math.round(y0 + ((y1 - y0) * k) / steps);
      this.paintDot(x, y, radius, erase);
    }
  }

  clear(): void {
    this.beginStroke();
    this.grid.fill(0);
  }

  setFrom(cells: Uint8Array): void {
    if (cells.length !== this.grid.length) {
      throw new Error("mask restore size mismatch");
    }
    this.grid = cells.slice();
  }

  translated(dy: number, dx: number): MaskLayer {
    const out = new MaskLayer(this.width, this.height);
    for (let y = 0; y < this.height; y++) {
      for (let x = 0; x < this.width; x++) {
        if (!this.get(x, y)) continue;
        const ny = y + dy;
        const nx = x + dx;
        if (nx >= 0 && ny >= 0 && nx < this.width && ny < this.height) {
          out.grid[ny * out.width + nx] = 1;
        }
      }
    }
    return out;
  }

  union(other: MaskLayer): MaskLayer {
    const out = new MaskLayer(this.width, this.height);
    for (let i = 0; i < this.grid.length; i++) {
      out.grid[i] = this.grid[i] | other.grid[i];
    }
    return out;
  }

  /** Run-length encoding: [width, height, run0, run1, ...] starting with a
   * zero-run; exact round trip via fromRle. */
  toRle(): number[] {
    const runs: number[] = [];
    let current = 0;
    let len = 0;
    for (const v of this.grid) {
      if (v === current) {
        len++;
      } else {
        runs.push(len);
        current = v;
        len = 1;
      }
    }
    runs.push(len);
    return [this.width, this.height, ...runs];
  }

  static fromRle(rle: number[]): MaskLayer {
    const [width, height, ...runs] = rle;
    const out = new MaskLayer(width, height);
    let pos = 0;
    let value = 0;
    for (const run of runs) {
      if (value === 1) out.grid.fill(1, pos, pos + run);
      pos += run;
      value = 1 - value;
    }
    if (pos !== width * height) {
      throw new Error(`RLE covers ${pos} cells, expected ${width * height}`);
    }
    return out;
  }

  toPngBase64(): string {
    return bytesToBase64(encodeGrayPng(this.grid, this.width, this.height));
  }

  /** sha256 over "HxW:" + row-major 0/1 bytes; must equal the server echo. */
  async hash(): Promise<string> {
    const prefix = new TextEncoder().encode(`${this.height}x${this.width}:`);
    const payload = new Uint8Array(prefix.length + this.grid.length);
    payload.set(prefix);
    payload.set(this.grid, prefix.length);
    const digest = await crypto.subtle.digest("SHA-256", payload);
    return Array.from(new Uint8Array(digest))
      .map((b) => b.toString(16).padStart(2, "0"))
      .join("");
  }
}
