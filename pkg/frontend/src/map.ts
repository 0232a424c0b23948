import L from 'leaflet';
import { swNeOf, type TileRenderer, type TileView } from './tiles';
import type { LatLon } from './types';

const OSM_TILES = 'https://tile.openstreetmap.org/{z}/{x}/{y}.png';
const OSM_ATTRIBUTION = '&copy; <a href="https://www.openstreetmap.org/copyright">OpenStreetMap</a> contributors';

/**
 * Leaflet-backed tile renderer: squares as rectangles built from the
 * server's corner coordinates (no client-side geodesic math), plus the
 * origin marker.
 */
export class LeafletRenderer implements TileRenderer {
  readonly map: L.Map;
  private rectangles = new Map<string, L.Rectangle>();
  private originMarker: L.CircleMarker | null = null;

  constructor(
    container: HTMLElement,
    private onTileClick: (view: TileView) => void,
  ) {
    this.map = L.map(container);
    L.tileLayer(OSM_TILES, { attribution: OSM_ATTRIBUTION, maxZoom: 19 }).addTo(this.map);
  }

  setOrigin(origin: LatLon, zoom = 17): void {
    this.map.setView([origin.lat, origin.lon], zoom);
    if (this.originMarker) this.originMarker.remove();
    this.originMarker = L.circleMarker([origin.lat, origin.lon], {
      radius: 7,
      color: '#1d4ed8',
      fillColor: '#3b82f6',
      fillOpacity: 0.9,
      weight: 2,
    })
      .bindTooltip('You are here')
      .addTo(this.map);
  }

  upsertTile(view: TileView): void {
    const [sw, ne] = swNeOf(view.corners);
    const bounds = L.latLngBounds([sw.lat, sw.lon], [ne.lat, ne.lon]);
    const style = {
      color: view.fill,
      weight: 1,
      opacity: 0.9,
      fillColor: view.fill,
      fillOpacity: view.fillOpacity,
    };
    const existing = this.rectangles.get(view.key);
    if (existing) {
      existing.setStyle(style);
    } else {
      const rect = L.rectangle(bounds, style).addTo(this.map);
      rect.on('click', () => this.onTileClick(this.latest.get(view.key) ?? view));
      this.rectangles.set(view.key, rect);
    }
    this.latest.set(view.key, view);
  }

  private latest = new Map<string, TileView>();

  clear(): void {
    for (const rect of this.rectangles.values()) rect.remove();
    this.rectangles.clear();
    this.latest.clear();
    if (this.originMarker) {
      this.originMarker.remove();
      this.originMarker = null;
    }
  }

  openPopup(at: LatLon, html: string): void {
    L.popup().setLatLng([at.lat, at.lon]).setContent(html).openOn(this.map);
  }
}
