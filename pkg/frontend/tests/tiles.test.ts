import { describe, expect, it } from 'vitest';
import {
  DomRenderer,
  PENDING_FILL,
  PENDING_OPACITY,
  RATED_OPACITY,
  TileStore,
  swNeOf,
  tileKey,
} from '../src/tiles';
import { fixtureFinalTiles, fixtureMessages } from './support';

function makeStore() {
  const container = document.createElement('div');
  document.body.appendChild(container);
  return { container, store: new TileStore(new DomRenderer(container)) };
}

function hexToRgb(hex: string): string {
  const r = parseInt(hex.slice(1, 3), 16);
  const g = parseInt(hex.slice(3, 5), 16);
  const b = parseInt(hex.slice(5, 7), 16);
  return `rgb(${r}, ${g}, ${b})`;
}

function domSnapshot(container: HTMLElement) {
  return [...container.querySelectorAll<HTMLElement>('.tile')]
    .map((el) => ({
      key: el.dataset.key,
      status: el.dataset.status,
      rating: el.dataset.rating,
      corners: el.dataset.corners,
      color: el.style.backgroundColor,
      opacity: el.style.opacity,
    }))
    .sort((a, b) => (a.key! < b.key! ? -1 : 1));
}

describe('TileStore over the canned stream', () => {
  it('renders nine uniquely keyed squares', () => {
    const { container, store } = makeStore();
    for (const msg of fixtureMessages()) store.apply(msg);
    expect(store.size).toBe(9);
    expect(container.querySelectorAll('.tile')).toHaveLength(9);
    expect(store.get(0, 0)?.status).toBe('rated');
  });

  it('draws pending squares gray and upgrades them to server colors', () => {
    const { container, store } = makeStore();
    const messages = fixtureMessages();
    for (const msg of messages.slice(0, 9)) store.apply(msg); // pendings only
    for (const el of container.querySelectorAll<HTMLElement>('.tile')) {
      expect(el.style.backgroundColor).toBe(hexToRgb(PENDING_FILL));
      expect(el.style.opacity).toBe(String(PENDING_OPACITY));
      expect(el.dataset.status).toBe('pending');
    }
    for (const msg of messages) store.apply(msg);
    for (const tile of fixtureFinalTiles()) {
      const el = container.querySelector<HTMLElement>(
        `[data-key="${tileKey(tile.i, tile.j)}"]`,
      )!;
      expect(el.style.backgroundColor).toBe(hexToRgb(tile.color!));
      expect(el.style.opacity).toBe(String(RATED_OPACITY));
      expect(el.dataset.rating).toBe(String(tile.rating));
    }
  });

  it('positions squares exactly at the server corner coordinates', () => {
    const { container, store } = makeStore();
    for (const msg of fixtureMessages()) store.apply(msg);
    for (const tile of fixtureFinalTiles()) {
      const el = container.querySelector<HTMLElement>(
        `[data-key="${tileKey(tile.i, tile.j)}"]`,
      )!;
      expect(JSON.parse(el.dataset.corners!)).toEqual(tile.corners);
    }
  });

  it('replaying the same stream yields an identical DOM tile set', () => {
    const { container, store } = makeStore();
    for (const msg of fixtureMessages()) store.apply(msg);
    const first = domSnapshot(container);
    for (const msg of fixtureMessages()) store.apply(msg);
    const second = domSnapshot(container);
    expect(second).toEqual(first);
    expect(store.snapshot()).toHaveLength(9);
  });

  it('never reorders existing squares when new ones arrive', () => {
    const { container, store } = makeStore();
    const messages = fixtureMessages();
    for (const msg of messages) store.apply(msg);
    const orderBefore = [...container.querySelectorAll<HTMLElement>('.tile')].map(
      (el) => el.dataset.key,
    );
    // A later expansion re-sends old tiles and appends a ring-2 square.
    for (const msg of messages) store.apply(msg);
    const ring2 = structuredClone(fixtureFinalTiles()[0]);
    ring2.i = 2;
    ring2.j = -1;
    store.apply(ring2);
    const orderAfter = [...container.querySelectorAll<HTMLElement>('.tile')].map(
      (el) => el.dataset.key,
    );
    expect(orderAfter.slice(0, orderBefore.length)).toEqual(orderBefore);
    expect(orderAfter.at(-1)).toBe('2,-1');
  });

  it('reset clears the layer', () => {
    const { container, store } = makeStore();
    for (const msg of fixtureMessages()) store.apply(msg);
    store.reset();
    expect(store.size).toBe(0);
    expect(container.querySelectorAll('.tile')).toHaveLength(0);
  });
});

describe('swNeOf', () => {
  it('extracts the SW and NE corners from server corner order', () => {
    const tile = fixtureFinalTiles()[0];
    const [sw, ne] = swNeOf(tile.corners);
    expect(sw.lat).toBeLessThan(ne.lat);
    expect(sw.lon).toBeLessThan(ne.lon);
    expect(sw).toEqual(tile.corners[0]);
    expect(ne).toEqual(tile.corners[2]);
  });
});
