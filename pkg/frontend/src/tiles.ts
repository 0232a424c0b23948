import type { LatLon, StreamMsg, TileMsg, TileStatus } from './types';

/** Gray used for squares that have no server color yet (pending/failed). */
export const PENDING_FILL = '#808080';
export const PENDING_OPACITY = 0.4;
export const RATED_OPACITY = 0.55;

/** What a renderer needs to draw one square. */
export interface TileView {
  key: string;
  i: number;
  j: number;
  corners: LatLon[];
  /** Fill color: the server's hex exactly, or the pending gray. */
  fill: string;
  fillOpacity: number;
  status: TileStatus;
  rating: number | null;
  detail: string;
}

export interface TileRenderer {
  upsertTile(view: TileView): void;
  clear(): void;
}

export function tileKey(i: number, j: number): string {
  return `${i},${j}`;
}

export function viewOf(msg: TileMsg): TileView {
  return {
    key: tileKey(msg.i, msg.j),
    i: msg.i,
    j: msg.j,
    corners: msg.corners,
    fill: msg.color ?? PENDING_FILL,
    fillOpacity: msg.status === 'rated' ? RATED_OPACITY : PENDING_OPACITY,
    status: msg.status,
    rating: msg.rating,
    detail: msg.detail,
  };
}

/** South-west and north-east corners of a server-ordered corner array. */
export function swNeOf(corners: LatLon[]): [LatLon, LatLon] {
  return [corners[0], corners[2]];
}

/**
 * The tile layer state: one entry per (i, j), updated from stream messages.
 *
 * Replaying the same stream is idempotent; tiles are keyed, never
 * reordered, and colors come from the server untouched.
 */
export class TileStore {
  private tiles = new Map<string, TileMsg>();

  constructor(private renderer: TileRenderer) {}

  apply(msg: StreamMsg): void {
    if (msg.type !== 'tile') return;
    this.tiles.set(tileKey(msg.i, msg.j), msg);
    this.renderer.upsertTile(viewOf(msg));
  }

  get(i: number, j: number): TileMsg | undefined {
    return this.tiles.get(tileKey(i, j));
  }

  get size(): number {
    return this.tiles.size;
  }

  /** Key-sorted snapshot, for order-insensitive comparisons. */
  snapshot(): TileView[] {
    return [...this.tiles.values()]
      .map(viewOf)
      .sort((a, b) => (a.key < b.key ? -1 : a.key > b.key ? 1 : 0));
  }

  reset(): void {
    this.tiles.clear();
    this.renderer.clear();
  }
}

/**
 * Plain-DOM renderer: one div per square carrying its geometry and state in
 * data attributes. Used by the tests (and usable as a no-map fallback);
 * the Leaflet renderer draws the same views on the real map.
 */
export class DomRenderer implements TileRenderer {
  constructor(private container: HTMLElement) {}

  upsertTile(view: TileView): void {
    let el = this.container.querySelector<HTMLElement>(`[data-key="${view.key}"]`);
    if (!el) {
      el = this.container.ownerDocument.createElement('div');
      el.className = 'tile';
      el.dataset.key = view.key;
      this.container.appendChild(el);
    }
    el.dataset.status = view.status;
    el.dataset.rating = view.rating === null ? '' : String(view.rating);
    el.dataset.corners = JSON.stringify(view.corners);
    el.style.backgroundColor = view.fill;
    el.style.opacity = String(view.fillOpacity);
    el.title = view.detail;
  }

  clear(): void {
    this.container.replaceChildren();
  }
}
